"""Multilayer plate homogenization, limit plate energies and recovery checks."""
from .laminate import Laminate, Layer, build_laminate, homogeneous_laminate, isotropic_form, sample_at
from .relaxation import EffectiveForms, effective_forms, qbar2, qbar2_star, relax_q2
from .tensor import ElasticForm, form_eval, form_pair

__all__ = [
    "EffectiveForms", "ElasticForm", "Laminate", "Layer", "build_laminate", "effective_forms",
    "form_eval", "form_pair", "homogeneous_laminate", "isotropic_form", "qbar2", "qbar2_star",
    "relax_q2", "sample_at",
]
