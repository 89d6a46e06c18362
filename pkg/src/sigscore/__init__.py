"""Non-adversarial training of neural SDE generators with signature kernel scores.

Submodules
----------
paths       path data model, interpolation and transformations
tsig        truncated signatures / log-signatures (brute-force kernel oracle)
sigkernel   kernel PDE solver, static kernels, Gram matrices, exact gradients
scores      kernel scores, MMD estimators, training losses, permutation test
nsde        neural SDE generator, conditioning encoder, training loops
diffengine  reverse-mode differentiation of the pipeline, Adam
synthdata   gBm / rough Bergomi simulators, CSV loader, conditional pairs
evalstats   KS protocols, ACF, cross-correlations
cli         `sigscore` command-line entry point
"""

from . import (
    cli,
    diffengine,
    evalstats,
    nsde,
    paths,
    scores,
    sigkernel,
    synthdata,
    tsig,
)

__all__ = [
    "cli",
    "diffengine",
    "evalstats",
    "nsde",
    "paths",
    "scores",
    "sigkernel",
    "synthdata",
    "tsig",
]

__version__ = "0.1.0"
