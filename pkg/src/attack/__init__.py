"""
Phase-preserving magnitude attacks on the spectrogram detector
"""

from src.attack.report import (
    AttackReport, AdversarialExample, Termination, perturbation_ratios, realized_ratios,
)
from src.attack.attacks import (
    AttackMethod, AttackConfig, AttackPerturber, clip2, fgm_attack, pgd_attack,
    random_noise_baseline, run_attack, write_adversarial_set,
)

__all__ = [
    'AttackReport', 'AdversarialExample', 'Termination', 'perturbation_ratios', 'realized_ratios',
    'AttackMethod', 'AttackConfig', 'AttackPerturber', 'clip2', 'fgm_attack', 'pgd_attack',
    'random_noise_baseline', 'run_attack', 'write_adversarial_set',
]
