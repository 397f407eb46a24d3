import random
from collections import defaultdict

import pytest

from lolguard.lexers.lexer import RARE, Token, TokenizedCommand
from lolguard.methods.vocabulary import Label, build_vocabulary, dumps_vocabulary, encode_token, load_vocabulary, \
    save_vocabulary, vocabulary
from lolguard.tools.errors import FormatError


def command(*words, binary='certutil'):
    return TokenizedCommand(binary, tuple(Token.word(w) for w in words))


def oracle(samples):
    malicious = set()
    benign = defaultdict(set)
    for tc, label in samples:
        if label is Label.MALICIOUS:
            malicious.update(tc.texts)
        else:
            for t in tc.texts:
                benign[t].add(tc.texts)
    kept = malicious | {t for t, cmds in benign.items() if len(cmds) >= 3} | {RARE}
    return sorted(kept)


def test_label_polarity():
    assert Label.MALICIOUS.positive
    assert not Label('benign').positive


def test_malicious_token_kept():
    v = build_vocabulary('certutil', [(command('urlcache', 'f'), Label.MALICIOUS)])
    assert 'urlcache' in v
    assert v.encode('urlcache') != v.rare_index


def test_benign_token_needs_three_distinct_commands():
    samples = [(command('query', 'a'), Label.BENIGN), (command('query', 'b'), Label.BENIGN),
               (command('query', 'a'), Label.BENIGN)]
    v = build_vocabulary('certutil', samples)
    assert 'query' not in v
    assert encode_token(v, Token.word('query')) == v.rare_index
    samples.append((command('query', 'c'), Label.BENIGN))
    assert 'query' in build_vocabulary('certutil', samples)


def test_empty_samples():
    v = build_vocabulary('certutil', [])
    assert v.entries == (RARE,)
    assert v.rare_index == 0


def test_encode():
    v = vocabulary('certutil', ['<rare>', '<url>', 'f'])
    assert encode_token(v, Token.word('zzz_unknown')) == v.rare_index
    assert v.encode('<url>') == 1
    assert v.encode('f') == 2


def test_wrong_binary():
    with pytest.raises(ValueError):
        build_vocabulary('certutil', [(command('a', binary='reg'), Label.BENIGN)])


def test_invalid_entries():
    with pytest.raises(ValueError):
        vocabulary('certutil', ['a', 'a', RARE])
    with pytest.raises(ValueError):
        vocabulary('certutil', ['a'])


def test_matches_oracle_on_random_datasets():
    rng = random.Random(11)
    words = ['w{}'.format(i) for i in range(12)]
    for _ in range(200):
        samples = list()
        for _ in range(rng.randint(0, 25)):
            tc = command(*[rng.choice(words) for _ in range(rng.randint(0, 5))])
            samples.append((tc, rng.choice([Label.BENIGN, Label.BENIGN, Label.MALICIOUS])))
        v = build_vocabulary('certutil', samples)
        assert list(v.entries) == oracle(samples)
        assert v.entries.count(RARE) == 1


def test_malicious_sample_never_removes_entries():
    rng = random.Random(17)
    words = ['w{}'.format(i) for i in range(12)]
    for _ in range(200):
        samples = [(command(*[rng.choice(words) for _ in range(rng.randint(0, 5))]),
                    rng.choice([Label.BENIGN, Label.MALICIOUS])) for _ in range(rng.randint(0, 20))]
        before = set(build_vocabulary('certutil', samples).entries)
        extra = command(*[rng.choice(words + ['new']) for _ in range(rng.randint(0, 4))])
        after = set(build_vocabulary('certutil', samples + [(extra, Label.MALICIOUS)]).entries)
        assert before <= after
        assert set(extra.texts) <= after


def test_round_trip(tmp_path):
    v = vocabulary('certutil', sorted(['<rare>', '<url>', '<ext_exe>', 'urlcache', 'f', 'c:\\temp\\ä']))
    path = str(tmp_path / 'certutil' / 'vocab.txt')
    save_vocabulary(v, path)
    loaded = load_vocabulary(path)
    assert loaded == v
    assert loaded.binary == 'certutil'
    assert dumps_vocabulary(loaded) == dumps_vocabulary(v)


def test_line_break_not_storable():
    with pytest.raises(ValueError):
        dumps_vocabulary(vocabulary('certutil', [RARE, 'a\nb']))


@pytest.mark.parametrize('content', [
    '<rare>\nf\nf\n',
    'f\nurlcache\n',
    '<rare>\n\nf\n',
    '<rare>\r\nf\r\n',
])
def test_malformed_files(tmp_path, content):
    path = tmp_path / 'vocab.txt'
    path.write_bytes(content.encode('utf-8'))
    with pytest.raises(FormatError):
        load_vocabulary(str(path), 'certutil')


def test_duplicate_reports_line(tmp_path):
    path = tmp_path / 'vocab.txt'
    path.write_text('<rare>\nf\nf\n', encoding='utf-8')
    with pytest.raises(FormatError) as e:
        load_vocabulary(str(path), 'certutil')
    assert e.value.line == 3
