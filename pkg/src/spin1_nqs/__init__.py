"""Exact-summation neural quantum states for the spin-1 bilinear-biquadratic chain."""
from .hilbert import SectorBasis, enumerate_sz0_basis, parity_reduction, sector_parity_dimensions
from .hamiltonian import build_hamiltonian, apply_hamiltonian
from .eigensolver import ground_states, select_target
from .aklt import aklt_mps, aklt_sector_vector
from .nqs import RbmShape, init_params, log_amplitudes, load_checkpoint, save_checkpoint
from .loss_geometry import (energy_and_gradient, infidelity, infidelity_gradient, qgt,
                            qgt_spectrum_and_rank, snapshot)
from .hessian import hessian_spectrum, infidelity_hessian, pairing_check
from .optimizer import (AdamYogiConfig, ModelConfig, NgdConfig, lcurve_select_epsilon, ngd_step,
                        run_energy_minimization, run_infidelity_minimization)
from .observables import correlation_profile, string_order, szsz_correlation

__version__ = "0.1.0"
