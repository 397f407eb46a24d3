"""
multi-layer perceptron token classifier: ReLU hidden layers,
logistic output, cross-entropy loss, mini-batch Adam updates
"""

import logging

import numpy as np
from scipy.special import expit, logit

from lolguard.models.classifier import tokenclassifier, MLP
from lolguard.tools.icy_decorator import icy

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
PRIOR_CLIP = 1e-3


@icy
class mlpclassifier(tokenclassifier):

    kind = MLP

    def __init__(self, binary, input_dim, hyper=None, seed=None):
        super(mlpclassifier, self).__init__(binary, input_dim, hyper, seed)
        self.weights = list()
        self.biases = list()

    @property
    def weights(self):
        return self._weights

    @property
    def biases(self):
        return self._biases

    @property
    def sizes(self):
        return (self._input_dim,) + self._hyper.mlp_hidden_sizes + (1,)

    @weights.setter
    def weights(self, weights):
        assert isinstance(weights, list)
        self._weights = weights

    @biases.setter
    def biases(self, biases):
        assert isinstance(biases, list)
        self._biases = biases

    def initparams(self, rng, prior):
        """He-normal hidden layers, output bias at the class prior log-odds"""
        sizes = self.sizes
        self._weights = list()
        self._biases = list()
        for i in range(len(sizes) - 1):
            scale = np.sqrt(2./sizes[i]) if i < len(sizes) - 2 else np.sqrt(1./sizes[i])
            self._weights.append(rng.normal(0., scale, (sizes[i], sizes[i+1])))
            self._biases.append(np.zeros(sizes[i+1], dtype=np.float64))
        self._biases[-1][0] = logit(np.clip(prior, PRIOR_CLIP, 1. - PRIOR_CLIP))

    def forward(self, x):
        """activations of every layer, input included"""
        acts = [x]
        for i in range(len(self._weights) - 1):
            acts.append(np.maximum(0., acts[-1] @ self._weights[i] + self._biases[i]))
        acts.append(expit(acts[-1] @ self._weights[-1] + self._biases[-1]))
        return acts

    def gradients(self, acts, y):
        n = y.shape[0]
        delta = (acts[-1][:, 0] - y)[:, None]/n  # d loss / d output logit
        gw = [None]*len(self._weights)
        gb = [None]*len(self._biases)
        for i in reversed(range(len(self._weights))):
            gw[i] = acts[i].T @ delta + self._hyper.mlp_l2*self._weights[i]/n
            gb[i] = delta.sum(axis=0)
            if i:
                delta = (delta @ self._weights[i].T)*(acts[i] > 0.)
        return gw, gb

    def fit(self, rows, y):
        rng = np.random.default_rng(self._seed)
        y = y.astype(np.float64)
        prior = float(y.mean())
        self.initparams(rng, prior)
        if prior in (0., 1.):
            # one class only: constant output at the clipped prior
            self._weights[-1][:] = 0.
            self.fitted = True
            logger.warning('%s: single-class training, MLP output fixed at %.4f',
                           self._binary, float(expit(self._biases[-1][0])))
            return self
        params = self._weights + self._biases
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        lr = self._hyper.mlp_learning_rate
        bs = self._hyper.mlp_batch_size
        n = rows.shape[0]
        step = 0
        for epoch in range(self._hyper.mlp_epochs):
            order = rng.permutation(n)
            for start in range(0, n, bs):
                batch = order[start:start + bs]
                gw, gb = self.gradients(self.forward(rows[batch]), y[batch])
                step += 1
                for j, g in enumerate(gw + gb):
                    m[j] = ADAM_BETA1*m[j] + (1. - ADAM_BETA1)*g
                    v[j] = ADAM_BETA2*v[j] + (1. - ADAM_BETA2)*g*g
                    mhat = m[j]/(1. - ADAM_BETA1**step)
                    vhat = v[j]/(1. - ADAM_BETA2**step)
                    params[j] -= lr*mhat/(np.sqrt(vhat) + ADAM_EPS)
            if logger.isEnabledFor(logging.DEBUG) and (epoch + 1) % 10 == 0:
                p = np.clip(self.forward(rows)[-1][:, 0], 1e-12, 1. - 1e-12)
                loss = -np.mean(y*np.log(p) + (1. - y)*np.log(1. - p))
                logger.debug('%s: epoch %d loss %.5f', self._binary, epoch + 1, loss)
        self.fitted = True
        return self

    def scores(self, matrix):
        return self.forward(matrix)[-1][:, 0]

    def arrays(self):
        out = list()
        for i, (w, b) in enumerate(zip(self._weights, self._biases)):
            out.append(('w{}'.format(i), w))
            out.append(('b{}'.format(i), b))
        return out

    def load_arrays(self, arrays):
        sizes = self.sizes
        nlayer = len(sizes) - 1
        weights = [arrays['w{}'.format(i)] for i in range(nlayer)]
        biases = [arrays['b{}'.format(i)] for i in range(nlayer)]
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (sizes[i], sizes[i+1]) or b.shape != (sizes[i+1],):
                raise ValueError('layer {} has shapes {} and {}, expected {} and {}'.format(
                    i, w.shape, b.shape, (sizes[i], sizes[i+1]), (sizes[i+1],)))
            if not (np.issubdtype(w.dtype, np.floating) and np.issubdtype(b.dtype, np.floating)):
                raise ValueError('layer {} parameters must be floating point'.format(i))
        extra = set(arrays) - {'w{}'.format(i) for i in range(nlayer)} - {'b{}'.format(i) for i in range(nlayer)}
        if extra:
            raise ValueError('unexpected arrays {}'.format(sorted(extra)))
        self._weights = weights
        self._biases = biases
