"""
工具模块

与实验语义无关的框架工具: RVID/SVQP 编解码, 随机子流, 配置文档解析, 报告写出.
子模块之间存在依赖 (params_io 依赖网络参数类型), 因此这里不做统一导出.
"""
