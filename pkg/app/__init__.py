"""
App Module
==========
Laboratório de atenção com kernels espectrais aprendíveis
"""

__version__ = "1.0.0"
__author__ = "Guilherme0321"
