"""Grammar-guided text-to-SQL generation.

A stack-driven decoder walks a SQL grammar and calls nine trainable
prediction modules (keywords, columns, operators, aggregators, ...) to
recursively assemble multi-clause, nested queries for unseen database
schemas.  The package also ships the companion set-match evaluation
metrics and a cross-domain slot-refilling data augmenter.

All numerics (BiLSTM encoders, attention, Adam) are implemented from
scratch on numpy with manual backward passes; the hot LSTM loops run as
numba kernels with a pure-numpy fallback (see stacksql.numerics.backend).
"""

__version__ = "0.1.0"
