"""
Schema 基类
提供严格校验与通用的序列化功能
"""

from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, model_serializer


def serialize_numpy_fields(data: Any) -> Any:
    """
    递归地将 numpy 标量/数组转换为 Python 原生类型

    Args:
        data: 要序列化的数据（可以是 dict, list, numpy 类型或其他类型）

    Returns:
        序列化后的数据
    """
    if isinstance(data, np.generic):
        return data.item()
    elif isinstance(data, np.ndarray):
        return data.tolist()
    elif isinstance(data, dict):
        return {key: serialize_numpy_fields(value) for key, value in data.items()}
    elif isinstance(data, (list, tuple)):
        return [serialize_numpy_fields(item) for item in data]
    elif isinstance(data, BaseModel):
        return serialize_numpy_fields(data.model_dump())
    else:
        return data


class StrictModel(BaseModel):
    """
    配置模型基类

    未声明的字段直接报错 (拼写错误的配置项不会被静默忽略), 实例不可变.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)


class BaseReportModel(BaseModel):
    """
    报告模型基类

    自动将 numpy 字段序列化为 Python 原生类型, 所有报告模型应继承此类
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @model_serializer(mode="wrap")
    def serialize_model(self, serializer, _info):
        data = serializer(self)
        return serialize_numpy_fields(data)
