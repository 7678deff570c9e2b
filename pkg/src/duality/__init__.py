"""Hamilton-Jacobi dual certificates and duality-gap reports."""

from .certificate import (
    DualCertificate, GapReport, hj_integrand, hj_surplus, hj_sufficient,
    dual_value, piece_surpluses, certificate_from_primal, duality_gap, FEAS_TOL
)

__all__ = [
    'DualCertificate', 'GapReport', 'hj_integrand', 'hj_surplus',
    'hj_sufficient', 'dual_value', 'piece_surpluses',
    'certificate_from_primal', 'duality_gap', 'FEAS_TOL'
]
