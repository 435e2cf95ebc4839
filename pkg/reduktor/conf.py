"""Access to the REDUKTOR settings dictionary with built-in defaults."""

from django.conf import settings

DEFAULTS = {
    'TOL_SUM': 1e-9,
    'TOL_ENTRY': 1e-12,
    'COMPRESSION_UNIT_TOL': 1e-8,
    'TOL_TRAJ': 1e-7,
    'TOL_OFFDIAG': 1e-10,
    'TOL_HERMITIAN': 1e-12,
    'TOL_UNITARY': 1e-10,
    'TOL_KRAUS': 1e-9,
    'EXHAUSTIVE_MAX_N': 8,
    'SUPPORT_TOL': 1e-10,
    'SUPPORT_SAMPLES': 64,
    'SERIES_TAIL_TOL': 1e-10,
    'MAX_H_NU': 0.5,
    'KERNEL_TOL': 1e-6,
    'CONVERGENCE_EPS': 1e-3,
    'PLATEAU_FRACTION': 0.1,
    'WORKERS': 1,
}


def setting(name, override=None):
    """Return `override` if given, else the configured value, else the default."""
    if override is not None:
        return override
    if settings.configured:
        configured = getattr(settings, 'REDUKTOR', {})
        if name in configured:
            return configured[name]
    return DEFAULTS[name]
