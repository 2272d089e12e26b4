"""pndose: deterministic proton dose engine.

Uncollided flux by analytic ray tracing with energy straggling; collided
flux by a rank-adaptive low-rank PN solver with a full-rank reference
solver as in-repo oracle.
"""

__version__ = "0.1.0"
