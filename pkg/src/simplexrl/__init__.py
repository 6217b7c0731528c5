"""Runtime-assured continuous control: plants, controllers, switching logic,
and a small DDPG stack for training and online retraining of neural policies.

The package is organized around a few independent layers:

* ``nn``          dense MLPs with analytic backprop and Adam, JSON checkpoints
* ``plants``      deterministic discrete-time models (pendulum, rover, pancreas)
* ``controllers`` verified-safe baseline laws and the neural-policy wrapper
* ``runtime``     switching conditions, decision module, shadow-mode collection
* ``rl``          replay buffer, DDPG updates, training episodes, evaluation
* ``tasks``       per-plant bundles wiring all of the above together
* ``harness``     config-driven command line front end
"""

import importlib

__all__ = ["nn", "plants", "controllers", "runtime", "rl", "tasks", "harness", "seeding"]
__version__ = "0.1.0"


def __getattr__(name):
    if name in __all__:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
