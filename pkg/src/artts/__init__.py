"""artts: automated test platform for simulated dual-channel PLC safety interlocks.

The package splits into a handful of layers:

* ``artts.chaindsl``     -- parsers for the two chain-program languages
* ``artts.engine``       -- the deterministic scan-cycle interpreter
* ``artts.station``      -- station models and the shipped reference station
* ``artts.explore``      -- exhaustive reachability oracle over a loaded station
* ``artts.traceability`` -- requirement hierarchy, validation matrices, coverage
* ``artts.runner``       -- test-script language, batch execution, defect tracking
* ``artts.bus``          -- TCP register protocol server and browser bridge
* ``artts.cli``          -- the ``artts`` command line entry point
"""

__version__ = "0.1.0"
