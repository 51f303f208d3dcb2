"""
Utils Module
============
Módulos utilitários
"""

from app.utils.file_utils import FileUtils
from app.utils.results import ResultsWriter

__all__ = ['FileUtils', 'ResultsWriter']
