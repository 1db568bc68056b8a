"""
应用层 - 业务协调和服务管理
"""
