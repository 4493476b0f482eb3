"""Shared pytest configuration.

The hypothesis profile is derandomized so the suite is reproducible run to
run; the bit-exactness contracts under test leave no room for flaky examples.
"""

from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo",
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")
