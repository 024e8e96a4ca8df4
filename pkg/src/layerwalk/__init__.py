"""Random walk in random scenery and the layered random conductance walk.

Modules: ``scenery`` (i.i.d. Pareto fields), ``walk`` (simple random walk
and its kernel), ``rwrs`` (the scenery clock and its deviations),
``layered`` (the layered walk and its kernel/Green estimators), ``oracle``
(exact finite-box values), ``theory`` (closed-form exponents), ``stats``
(fits and verdicts) and ``cli``.
"""

__version__ = "0.1.0"
