"""
Utilities module
"""

from .image_io import ImageIO
from .pdf_generator import pdf_generator
from .procam_framework import ProcamFramework

__all__ = ['ImageIO', 'pdf_generator', 'ProcamFramework']
