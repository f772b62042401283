"""Eikonal travel-time tomography by filtered back projection.

Fast-sweeping forward solves, matrix-free Radon and fanbeam operators, the
two-step probing reconstruction and the assumed-background adjoint back
projection.
"""
__version__ = "0.1.0"

from .eikonal import (EikonalError, EikonalSinogram, EikonalSolution, boundary_trace,
                      chord_sinogram, forward_sinogram, solve_eikonal, upwind_gradient)
from .grid import (AcquisitionGeometry, Grid2D, ScalarField2D, VectorField2D, disk_mask,
                   gaussian_smooth, gradient, normalize_direction, sample_bilinear)
from .phantoms import PRESETS, Box, PhantomSpec, add_noise, build_phantom, preset
from .reconstruct import (AdjointBPResult, ReconstructionError, TwoStepResult,
                          reconstruct_adjoint_bp, reconstruct_two_step, solve_advection_diffusion)
from .transforms import (FanbeamSinogram, FilterSpec, ParallelSinogram, apply_filter, fanbeam,
                         fanbeam_adjoint, fbp_fanbeam, fbp_parallel, radon, radon_adjoint,
                         rebin_fan_to_parallel)
from .diagnostics import p1_field, p1_l1_check
