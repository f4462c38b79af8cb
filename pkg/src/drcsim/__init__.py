"""Dynamic repeated consensus over a simulated partially synchronous network.

The package has three layers:

* protocol state machines: ``core``, ``chain``, ``synchro``, ``consensus``,
  ``driver`` -- pure, deterministic, no knowledge of the simulator;
* the discrete-event simulator: ``simnet`` (virtual time, skewed clocks,
  lossy pre-GST channels, Byzantine strategies) producing ``trace`` records;
* offline analysis: ``verifier`` (safety/liveness oracles over traces),
  ``scenario`` + ``cli`` (run/check/sweep/bound harness).
"""

__version__ = "0.1.0"
