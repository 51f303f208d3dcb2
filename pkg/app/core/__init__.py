"""
Core Module
===========
Módulos principais do laboratório
"""

from app.core.config import settings, read_config_file
from app.core.logging import setup_logging, get_logger

__all__ = ['settings', 'read_config_file', 'setup_logging', 'get_logger']
