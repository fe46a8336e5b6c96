from .bench_loss import setup_bench_loss_handler
from .concrete import setup_concrete_handler
from .linreg import setup_linreg_handler
from .nn_recon import setup_nn_recon_handler
from .ode import setup_ode_handler
from .sweeps import setup_sweep_handlers
from .verify import run_verify

__all__ = [
    "setup_bench_loss_handler",
    "setup_concrete_handler",
    "setup_linreg_handler",
    "setup_nn_recon_handler",
    "setup_ode_handler",
    "setup_sweep_handlers",
    "run_verify",
]
