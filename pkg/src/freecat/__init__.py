"""Typed generative DSLs as directed multigraphs.

Declare a DSL as objects and primitive arrows, sample well-typed programs
from it by a biased random walk, execute them as latent-variable generative
models, and learn both walk biases and arrow parameters by amortized
stochastic variational inference.
"""

from .category import (CategorySpec, Generator, Morphism, SpecError,
                       TypeObject, UNIT, compose, generator_chain, parse_spec,
                       product, signature, to_dot, typecheck)
from .inference import (Baseline, ElboEstimate, TrainConfig, elbo, init_store,
                        propose, structure_posterior, surrogate_loss, train)
from .kernels import BACKEND as KERNEL_BACKEND
from .model import (ParamStore, dagger, execute, joint_logprob,
                    load_checkpoint, save_checkpoint)
from .numerics import (DistParams, finite_diff_grad, log_density, make_rng,
                       mat_exp, sample, softmax_rows)
from .sampler import (Trace, WalkConfig, enumerate_paths, expand_macro,
                      path_between, path_logprob)
from .transition import (ArrowGraph, TransitionModel, arrow_graph,
                         intuitive_distance, transition_matrix)

__version__ = "0.1.0"
