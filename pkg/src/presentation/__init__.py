"""
表示层 - 命令行入口与控制器
"""
