"""Optimized Schwarz solver for the gravimetric Poisson problem.

Robin transmission coefficients are tuned by CMA-ES on the Fourier
convergence factor of the two-subdomain iteration.
"""
from .linalg import CsrMatrix, PcgConfig, SolveStats, csr_from_triplets, daxpy, dot, pcg, spmv
from .model import (G, DensityField, Grid, assemble_poisson, direct_integration_potential, load_density_grid,
                    make_grid, point_mass_potential, synthetic_crater_anomaly)
from .rate import (FrequencyBand, TransmissionParams, convergence_rate, cost_function, lambda_symbol,
                   optimal_oo0_symmetric, rho_max)
from .cmaes import CmaEsConfig, cmaes_ask, cmaes_init, cmaes_minimize, cmaes_tell
from .schwarz import (SchwarzConfig, SchwarzReport, assemble_subdomain, exact_dtn_transmission,
                      exchange_interface_data, partition_x, schwarz_solve)

__version__ = "0.1.0"
