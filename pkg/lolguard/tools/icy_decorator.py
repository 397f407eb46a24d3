"""
this decorator prevents adding new attributes
to initialized class instances, so a typo such as
``uni.treshold = 0.7`` fails loudly instead of silently
creating a dead attribute
"""

import logging
from functools import wraps

logger = logging.getLogger(__name__)


def icy(cls):
    cls.__frozen = False

    def frozensetattr(self, key, value):
        if self.__frozen and not hasattr(self, key):
            logger.error('class %s is frozen, refusing %s = %r', cls.__name__, key, value)
            raise AttributeError('{} is frozen, cannot add attribute {!r}'.format(cls.__name__, key))
        object.__setattr__(self, key, value)

    def init_decorator(func):
        @wraps(func)
        def wrapper(self, *args, **kwargs):
            func(self, *args, **kwargs)
            self.__frozen = True
        return wrapper

    cls.__setattr__ = frozensetattr
    cls.__init__ = init_decorator(cls.__init__)

    return cls
