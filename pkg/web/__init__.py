"""电路尺寸优化任务服务"""
