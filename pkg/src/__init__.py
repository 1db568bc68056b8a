"""
gcrn：图卷积循环网络的源代码包
"""

__version__ = "1.0.0"
