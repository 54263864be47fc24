"""
执行模块
提供目标函数的计时执行与批量并发评估
"""
