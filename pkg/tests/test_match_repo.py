from datetime import date

import pandas as pd
import pytest

from src.errors import InputFileError, SchemaError
from src.repositories import MatchRepository


def _write(path, text: str):
    path.write_text(text, encoding='utf-8')
    return path


def test_load_merges_files_in_order(season_files):
    table = MatchRepository().load_matches(season_files)
    assert len(table) == 240
    assert table.frame.index.name == 'obs_id'
    assert list(table.frame.index) == list(range(240))
    assert table.source_files == tuple(str(p) for p in season_files)
    # 第二个文件没有 Referee 列，对应行记为缺失
    assert table.column_missing_counts['Referee'] == 120


def test_parallel_load_matches_sequential(season_files):
    repo = MatchRepository()
    sequential = repo.load_matches(season_files, workers=1)
    parallel = repo.load_matches(season_files, workers=4)
    pd.testing.assert_frame_equal(sequential.frame, parallel.frame)


def test_na_cell_is_missing_and_row_retained(tmp_path):
    path = _write(tmp_path / 'na.csv', (
        'Date,HomeTeam,AwayTeam,FTHG,HTAG,HST,HC,HR,AR\n'
        '14/08/10,Arsenal,Leeds,2,0,5,4,0,0\n'
        '21/08/10,Chelsea,Arsenal,1,1,NA,6,0,1\n'
        '28/08/10,Leeds,Chelsea,0,0,3,2,0,0\n'
    ))
    table = MatchRepository().load_matches([path])
    assert len(table) == 3
    assert pd.isna(table.frame.loc[1, 'HST'])
    assert table.frame.loc[1, 'FTHG'] == 1


def test_malformed_counts_become_missing(tmp_path):
    path = _write(tmp_path / 'bad.csv', (
        'Date,HomeTeam,FTHG,HST\n'
        '14/08/10,Arsenal,two,-1\n'
        '21/08/10,Chelsea,1.5,4\n'
    ))
    frame = MatchRepository().load_matches([path]).frame
    assert frame['FTHG'].isna().all()
    assert pd.isna(frame.loc[0, 'HST'])
    assert frame.loc[1, 'HST'] == 4


def test_dates_accept_two_and_four_digit_years(tmp_path):
    path = _write(tmp_path / 'dates.csv', (
        'Date,HomeTeam,FTHG\n'
        '19/08/00,Charlton,4\n'
        '22/05/2021,Arsenal,2\n'
    ))
    table = MatchRepository().load_matches([path])
    records = list(table.records())
    assert records[0].date == date(2000, 8, 19)
    assert records[1].date == date(2021, 5, 22)
    assert records[1].home_team == 'Arsenal'
    assert records[0].referee is None


def test_unknown_columns_are_preserved(tmp_path):
    path = _write(tmp_path / 'extra.csv', 'Date,HomeTeam,FTHG,B365H\n14/08/10,Arsenal,1,1.5\n')
    table = MatchRepository().load_matches([path])
    assert table.columns[-1] == 'B365H'


def test_empty_file_gives_empty_table(tmp_path):
    path = _write(tmp_path / 'empty.csv', 'Date,HomeTeam,FTHG\n')
    table = MatchRepository().load_matches([path])
    assert len(table) == 0
    assert 'FTHG' in table.columns


def test_missing_required_header_is_schema_error(tmp_path):
    path = _write(tmp_path / 'noteam.csv', 'Date,FTHG\n14/08/10,1\n')
    with pytest.raises(SchemaError, match='HomeTeam'):
        MatchRepository().load_matches([path])


def test_unreadable_file_names_the_path(tmp_path):
    missing = tmp_path / 'nope.csv'
    with pytest.raises(InputFileError, match='nope.csv'):
        MatchRepository().load_matches([missing])


def test_latin1_file_is_read(tmp_path):
    path = tmp_path / 'latin.csv'
    path.write_bytes('Date,HomeTeam,FTHG\n14/08/10,Málaga,1\n'.encode('latin-1'))
    table = MatchRepository().load_matches([path])
    assert table.frame.loc[0, 'HomeTeam'] == 'Málaga'
