"""Train-less accuracy prediction and simulated architecture search.

Modules:

* :mod:`~trainless.archspace` -- layer types, validity rules, random sampling
* :mod:`~trainless.shape` -- shape inference, parameter/FLOP/memory counts
* :mod:`~trainless.encoding` -- 14-feature layer encodings and standardization
* :mod:`~trainless.lde` -- experiment store, DCN filtering, synthetic oracle
* :mod:`~trainless.nn` -- stacked LSTM with exact BPTT, RMSprop, gradient check
* :mod:`~trainless.tap` -- the accuracy predictor: training and iterative prediction
* :mod:`~trainless.evolve` -- tournament evolution scored by the predictor
* :mod:`~trainless.metrics` -- MSE, Kendall tau-b, R^2
"""

__version__ = "0.1.0"
