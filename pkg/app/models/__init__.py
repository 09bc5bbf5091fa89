# 导出领域实体, 便于 from app.models import Video
from app.models.video import FloatVideo, LabeledVideo, Video, as_float, quantize
from app.models.transforms import GridParams, GuardianMap, SamplingParams
from app.models.attack import AttackResult, TraceRecord

__all__ = [
    "Video",
    "FloatVideo",
    "LabeledVideo",
    "as_float",
    "quantize",
    "SamplingParams",
    "GridParams",
    "GuardianMap",
    "AttackResult",
    "TraceRecord",
]
