__all__ = [
    'BaseRepository',
    'MatchRecord',
    'MatchRepository',
    'MatchTable',
]

from .base_repo import BaseRepository
from .match_repo import MatchRecord, MatchRepository, MatchTable
