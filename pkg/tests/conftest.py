from __future__ import annotations

from hypothesis import HealthCheck, settings

# first calls into the compiled kernels pay a one-off JIT cost; wall-clock
# deadlines are meaningless for that and for the timing-sensitive checks
settings.register_profile(
    "lwcnn",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("lwcnn")
