from .pipelines.pipeline import pipe
from .pipelines.unimodel import unimodel, Prediction, WhitelistRule
from .lexers.catalog import register_binary, supported_binaries

__version__ = '1.0.0'
