"""
lolguard command line: train, predict, evaluate, tokenize, retrain

Results go to stdout, logging to stderr. Exit codes:
0 success (predict: nothing malicious), 1 predict flagged a command,
2 bad input, dataset or routing error, 3 artifact write error.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass

from lolguard.lexers.catalog import extract_binary, tokenize
from lolguard.lexers.lexer import RARE, RawCommand
from lolguard.methods.features import DEFAULT_WINDOW, command_matrix, format_vector
from lolguard.methods.vocabulary import Label, vocabulary
from lolguard.models.classifier import AGGREGATIONS, DEFAULT_THRESHOLD, Hyperparams
from lolguard.pipelines.unimodel import unimodel
from lolguard.tools.dataset import load_dataset
from lolguard.tools.errors import ArtifactLocked, LolguardError, ModelMissing, UnsupportedBinary
from lolguard.tools.metrics import fmt_score, format_detection_table, format_model_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MALICIOUS = 1
EXIT_INPUT = 2
EXIT_WRITE = 3

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')
BUNDLED_DATASET = os.path.join(DATA_DIR, 'commands.jsonl')
BUNDLED_VALIDATION = os.path.join(DATA_DIR, 'validation.jsonl')
DEFAULT_ARTIFACTS = 'artifacts'


@dataclass(frozen=True)
class CliConfig:
    command: str
    artifact_dir: str
    dataset_path: str = BUNDLED_DATASET
    validation_path: str = None
    seed: int = 0
    window: int = None
    aggregation: str = None
    threshold: float = None
    output_format: str = 'text'
    strict: bool = False
    vectors: bool = False
    binary: str = None
    command_line: str = None
    input_path: str = None

    def __post_init__(self):
        if self.window is not None and self.window < 1:
            raise ValueError('window must be at least 1, got {}'.format(self.window))
        if self.threshold is not None and not (0. <= self.threshold <= 1.):
            raise ValueError('threshold must lie in [0, 1], got {}'.format(self.threshold))
        if self.aggregation is not None and self.aggregation not in AGGREGATIONS:
            raise ValueError('unknown aggregation {!r}'.format(self.aggregation))
        if self.seed < 0:
            raise ValueError('seed must be non-negative, got {}'.format(self.seed))
        if self.output_format not in ('text', 'json'):
            raise ValueError('unknown output format {!r}'.format(self.output_format))

    @property
    def json(self):
        return self.output_format == 'json'


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--artifacts', dest='artifact_dir',
                        default=os.environ.get('LOLGUARD_ARTIFACTS', DEFAULT_ARTIFACTS),
                        help='artifact directory (default: $LOLGUARD_ARTIFACTS or ./artifacts)')
    common.add_argument('--json', dest='output_format', action='store_const', const='json', default='text',
                        help='one JSON object per output line')
    common.add_argument('--log-level', default=os.environ.get('LOLGUARD_LOG_LEVEL', 'WARNING'),
                        choices=('DEBUG', 'INFO', 'WARNING', 'ERROR'), type=str.upper)

    scoring = argparse.ArgumentParser(add_help=False)
    scoring.add_argument('--agg', dest='aggregation', choices=AGGREGATIONS, default=None,
                         help='token score pooling (default: max, or the manifest value)')
    scoring.add_argument('--threshold', type=float, default=None,
                         help='malicious iff command score >= threshold (default: 0.5, or the manifest value)')

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument('--dataset', dest='dataset_path', default=BUNDLED_DATASET,
                          help='JSON-lines dataset (default: the bundled one)')
    training.add_argument('--seed', type=int, default=0)
    training.add_argument('--window', type=int, default=DEFAULT_WINDOW)

    parser = argparse.ArgumentParser(prog='lolguard', description='LOLBin command-line detector')
    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('train', parents=[common, scoring, training],
                   help='train every binary of a dataset and write the artifacts')

    p = sub.add_parser('predict', parents=[common, scoring], help='score commands')
    p.add_argument('command_line', nargs='?', default=None, help='one command; stdin or --input when absent')
    p.add_argument('--input', dest='input_path', default=None, help="file of commands, one per line ('-' for stdin)")
    p.add_argument('--strict', action='store_true', help='stop at the first routing or model error')

    p = sub.add_parser('evaluate', parents=[common, scoring], help='detection report over a validation file')
    p.add_argument('--validation', dest='validation_path', default=BUNDLED_VALIDATION)

    p = sub.add_parser('tokenize', parents=[common], help='show the tokens of a command')
    p.add_argument('command_line')
    p.add_argument('--vectors', action='store_true', help='print each token feature vector')
    p.add_argument('--window', type=int, default=None)

    p = sub.add_parser('retrain', parents=[common, training], help='rebuild one binary in place')
    p.add_argument('--binary', required=True)
    return parser


def config_from_args(args):
    keys = CliConfig.__dataclass_fields__
    return CliConfig(**{k: v for k, v in vars(args).items() if k in keys and v is not None})


def emit(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + '\n')


def cmd_train(config):
    try:
        samples = load_dataset(config.dataset_path)
    except (LolguardError, OSError) as e:
        logger.error('cannot read dataset %s: %s', config.dataset_path, e)
        return EXIT_INPUT
    if not samples:
        logger.error('dataset %s holds no samples', config.dataset_path)
        return EXIT_INPUT
    uni = unimodel.train(samples, Hyperparams(seed=config.seed), config.seed, config.window or DEFAULT_WINDOW,
                         config.aggregation or 'max',
                         DEFAULT_THRESHOLD if config.threshold is None else config.threshold)
    try:
        uni.save(config.artifact_dir)
    except (ArtifactLocked, OSError) as e:
        logger.error('cannot write artifacts to %s: %s', config.artifact_dir, e)
        return EXIT_WRITE
    if config.json:
        for binary in uni.binaries:
            emit(uni.entry(binary).metadata)
    else:
        print(format_model_table(uni.model_rows()))
    return EXIT_OK


def load_unimodel(config):
    uni = unimodel.load(config.artifact_dir)
    settings = dict()
    if config.aggregation is not None:
        settings['aggregation'] = config.aggregation
    if config.threshold is not None:
        settings['threshold'] = config.threshold
    return uni.configured(**settings) if settings else uni


def read_commands(config):
    if config.command_line is not None:
        return [config.command_line]
    if config.input_path in (None, '-'):
        return sys.stdin.read().splitlines()
    with open(config.input_path, 'r', encoding='utf-8') as f:
        return f.read().splitlines()


def cmd_predict(config):
    try:
        uni = load_unimodel(config)
        lines = read_commands(config)
    except (LolguardError, OSError) as e:
        logger.error('%s', e)
        return EXIT_INPUT
    code = EXIT_OK
    for line in lines:
        if not line.strip():
            continue
        try:
            p = uni.predict(line)
        except (UnsupportedBinary, ModelMissing) as e:
            if config.strict:
                logger.error('%s', e)
                return EXIT_INPUT
            logger.warning('skipping %r: %s', line, e)
            if config.json:
                emit({'command': line, 'error': str(e)})
            else:
                print('error\t{}\t{}'.format(e, line))
            continue
        if p.label is Label.MALICIOUS:
            code = EXIT_MALICIOUS
        if config.json:
            emit(p.to_dict())
        else:
            print('{}\t{:.6f}\t{}\t{}\t{}'.format(p.binary, p.command_score, p.label.value,
                                                 'suppressed' if p.suppressed else '-', line))
    return code


def cmd_evaluate(config):
    try:
        uni = load_unimodel(config)
        samples = load_dataset(config.validation_path)
    except (LolguardError, OSError) as e:
        logger.error('%s', e)
        return EXIT_INPUT
    if not samples:
        logger.error('validation file %s holds no samples', config.validation_path)
        return EXIT_INPUT
    report = uni.validate(samples)
    if config.json:
        for binary, (detected, total) in sorted(report.counts.items()):
            emit({'binary': binary, 'detected': detected, 'total': total})
        total = {'binary': 'TOTAL', 'detected': report.detected, 'total': report.total}
        if report.metrics is not None:
            total['metrics'] = report.metrics.to_dict()
        emit(total)
    else:
        print(format_detection_table(report.counts))
        if report.metrics is not None:
            m = report.metrics
            print('accuracy {}  precision {}  recall {}  f1 {}  (tp {} fp {} tn {} fn {})'.format(
                fmt_score(m.accuracy), fmt_score(m.precision), fmt_score(m.recall), fmt_score(m.f1),
                m.tp, m.fp, m.tn, m.fn))
    for command, message in report.errors:
        logger.warning('not scored: %s (%s)', command, message)
    return EXIT_OK


def vectors_vocabulary(config, binary, tc):
    """the trained vocabulary when artifacts hold the binary, else one built from the command itself"""
    try:
        uni = unimodel.load(config.artifact_dir)
        if binary in uni:
            return uni.entry(binary).vocab, (config.window or uni.window)
    except (LolguardError, OSError) as e:
        logger.info('no usable artifacts (%s), using the command as vocabulary', e)
    return vocabulary(binary, sorted(set(tc.texts) | {RARE})), (config.window or DEFAULT_WINDOW)


def cmd_tokenize(config):
    try:
        binary = extract_binary(config.command_line)
    except UnsupportedBinary as e:
        logger.error('%s', e)
        return EXIT_INPUT
    tc = tokenize(RawCommand(binary, config.command_line))
    rows = None
    if config.vectors:
        vocab, window = vectors_vocabulary(config, binary, tc)
        rows = [format_vector(r) for r in command_matrix(tc, vocab, window)]
    if config.json:
        out = {'binary': binary, 'tokens': list(tc.texts)}
        if rows is not None:
            out['vectors'] = rows
        emit(out)
    else:
        print(' '.join(tc.texts))
        for text, row in zip(tc.texts, rows or ()):
            print('{}\t{}'.format(text, row))
    return EXIT_OK


def cmd_retrain(config):
    try:
        uni = unimodel.load(config.artifact_dir)
        samples = load_dataset(config.dataset_path)
        uni = uni.retrain_binary(config.binary, samples, Hyperparams(seed=config.seed), config.seed)
    except (LolguardError, OSError) as e:
        logger.error('%s', e)
        return EXIT_INPUT
    try:
        uni.save(config.artifact_dir)
    except (ArtifactLocked, OSError) as e:
        logger.error('cannot write artifacts to %s: %s', config.artifact_dir, e)
        return EXIT_WRITE
    binary = config.binary.lower()
    if config.json:
        emit(uni.entry(binary).metadata)
    else:
        print(format_model_table([r for r in uni.model_rows() if r[0] == binary]))
    return EXIT_OK


COMMANDS = {'train': cmd_train, 'predict': cmd_predict, 'evaluate': cmd_evaluate,
            'tokenize': cmd_tokenize, 'retrain': cmd_retrain}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_INPUT
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, args.log_level),
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        config = config_from_args(args)
    except ValueError as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write('lolguard: error: {}\n'.format(e))
        return EXIT_INPUT
    return COMMANDS[config.command](config)
