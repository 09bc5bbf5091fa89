# Schemas 模块: 配置文档与报告的 Pydantic 模型
