from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.services.ingest_service import ModelFrame

FIXTURES = Path(__file__).parent / 'fixtures'
TEAMS = ('Leeds', 'Arsenal', 'Chelsea')


def season_frame(seed: int = 7, matches_per_team: int = 40, four_digit_year: bool = False) -> pd.DataFrame:
    """football-data.co.uk 风格的合成赛季表，FTHG 按 log-linear 模型生成"""
    rng = np.random.default_rng(seed)
    rows = []
    day = pd.Timestamp('2010-08-14')
    strength = {'Leeds': -0.2, 'Arsenal': 0.0, 'Chelsea': 0.25}
    for i in range(matches_per_team * len(TEAMS)):
        team = TEAMS[i % len(TEAMS)]
        hst = int(rng.poisson(4.0)) + 1
        hc = int(rng.poisson(5.0)) + 1
        htag = int(rng.poisson(0.6))
        hr = int(rng.random() < 0.08)
        ar = int(rng.random() < 0.10)
        mu = np.exp(-0.9 + strength[team] + 0.6 * np.log(hst) + 0.05 * np.log(hc) + 0.2 * ar)
        date = day + pd.Timedelta(days=3 * i)
        rows.append({
            'Div': 'E0',
            'Date': date.strftime('%d/%m/%Y' if four_digit_year else '%d/%m/%y'),
            'HomeTeam': team,
            'AwayTeam': TEAMS[(i + 1) % len(TEAMS)],
            'FTHG': int(rng.poisson(mu)),
            'HTAG': htag,
            'HST': hst,
            'HC': hc,
            'HR': hr,
            'AR': ar,
            'Referee': f"Ref {i % 70}",
        })
    frame = pd.DataFrame(rows)
    # 保证 HR / AR 两列不全为 0
    frame.loc[0, 'HR'] = 1
    frame.loc[1, 'AR'] = 1
    return frame


def write_csv(path: Path, frame: pd.DataFrame) -> Path:
    frame.to_csv(path, index=False)
    return path


@pytest.fixture
def season_files(tmp_path) -> list[Path]:
    first = write_csv(tmp_path / 'E0_1011.csv', season_frame(seed=7))
    second_frame = season_frame(seed=11, four_digit_year=True).drop(columns=['Referee'])
    second = write_csv(tmp_path / 'E0_1112.csv', second_frame)
    return [first, second]


@pytest.fixture
def output_dir(tmp_path) -> Path:
    return tmp_path / 'out'


def synthetic_model_frame(seed: int = 3, n: int = 60) -> ModelFrame:
    rng = np.random.default_rng(seed)
    x1 = rng.normal(0.0, 0.5, n)
    x2 = rng.normal(0.0, 0.5, n)
    team = np.array(['Arsenal', 'Chelsea', 'Leeds'])[np.arange(n) % 3]
    effect = np.where(team == 'Chelsea', 0.3, np.where(team == 'Leeds', -0.2, 0.0))
    y = rng.poisson(np.exp(0.3 - 0.2 * x1 + 0.5 * x2 + effect))
    data = pd.DataFrame({'FTHG': y, 'HomeTeam': team, 'x1': x1, 'x2': x2},
                        index=pd.RangeIndex(100, 100 + n, name='obs_id'))
    return ModelFrame.from_frame(data, categorical=('HomeTeam',))


@pytest.fixture
def model_frame() -> ModelFrame:
    return synthetic_model_frame()
