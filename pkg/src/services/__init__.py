__all__ = [
    'DistService',
    'IngestService',
    'ReportWriter',
    'chart_service',
    'diagnostics_service',
    'glm_service',
    'search_service',
    'specfun',
]

from . import chart_service, diagnostics_service, glm_service, search_service, specfun
from .dist_service import DistService
from .ingest_service import IngestService
from .report_service import ReportWriter
