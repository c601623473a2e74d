"""
Toolkit settings, read from the ``HYPERMATCH`` dict in the Django settings.

Usage:
    from matching.conf import hypermatch_settings
    hypermatch_settings.MATERIALIZATION_THRESHOLD

Values are looked up on every access so ``override_settings`` in tests takes
effect immediately.
"""

from django.conf import settings

DEFAULTS = {
    # Largest n for which dense n x n matrices are built.
    'MATERIALIZATION_THRESHOLD': 5000,
    # Largest n for the dense n^3 / n^4 oracles.
    'BRUTE_FORCE_THRESHOLD': 40,
    # Scene triples are enumerated up to this count, sampled beyond it.
    'Q_TRIPLE_CAP': 200_000,
    # 0 means one worker per CPU.
    'THREADS': 0,
    'EQUALITY_TOL_REL': 1e-12,
    'MAX_OUTER_ITERS': 100,
    'IPFP_MAX_ITER': 50,
    'MPM_MAX_ITER': 300,
    'MPM_TOL': 1e-10,
    'HOPM_MAX_ITER': 100,
    'HOPM_TOL': 1e-10,
}


class HypermatchSettings:
    """
    Lazy accessor for toolkit settings with defaults.

    Attributes:
    - defaults (dict): Fallback value for every known key.
    """

    def __init__(self, defaults=None):
        self.defaults = defaults or DEFAULTS

    def __getattr__(self, attr):
        if attr not in self.defaults:
            raise AttributeError(f"Invalid hypermatch setting: '{attr}'")
        user_settings = getattr(settings, 'HYPERMATCH', {}) or {}
        return user_settings.get(attr, self.defaults[attr])


hypermatch_settings = HypermatchSettings(DEFAULTS)
