"""Bi-level interactive decision making for autonomous driving at desk scale.

Layers, bottom to top:

- ``kernels``  -- hot numeric primitives (compiled core with pure fallback)
- ``world``    -- deterministic 2D traffic microsimulation
- ``mdp``      -- meta-action sets, observation encoding, joint reward, termination
- ``nets``     -- dense policy/value networks with analytic gradients
- ``motion``   -- trajectory generation, feasibility, receding-horizon tracking
- ``search``   -- network-guided tree search with rolling optimization
- ``training`` -- discrete SAC and PPO trainers producing the search networks
- ``bench``    -- episode harness, metrics, comparison tables, replay
"""

from bida.kernels import KERNEL_BACKEND

__all__ = ["KERNEL_BACKEND"]
__version__ = "0.1.0"
