#!/usr/bin/env python3
"""
gcrn 图卷积循环网络
`python app.py <command> ...` 与安装后的 `gcrn <command> ...` 等价
"""

from src.presentation.cli import run

if __name__ == "__main__":
    run()
