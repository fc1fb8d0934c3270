"""Numerical toolkit for one-shot coherence distillation.

Modules: :mod:`matcore` (states and matrix functions), :mod:`sdpcore`
(SDP modelling on top of Clarabel), :mod:`channels`, :mod:`measures`,
:mod:`oneshot` (distillation rates), :mod:`protocol` (explicit IO
distiller and extraction), :mod:`boundcoh` and :mod:`cli`.
"""
__version__ = "0.1.0"
