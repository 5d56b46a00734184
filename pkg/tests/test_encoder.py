import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from futureqa.encoder import (CLS, PAD, SEP, UNK, EncoderParams, TokenVocab,
                              _forward_ids, backward_ids, build_token_vocab,
                              detokenize, encode, encode_answer_token,
                              encode_pair, init_encoder, load_encoder,
                              load_token_vocab, save_encoder, save_token_vocab,
                              tokenize)

CORPUS = ["Who will Sudan host on 2021-08-01?",
          "Will Germany host Ramtane Lamamra on 2021-08-01?",
          "yes", "unknown"]


@pytest.fixture
def vocab():
    return build_token_vocab(CORPUS)


@pytest.fixture
def params(vocab, rng):
    return init_encoder(len(vocab), dim=4, rng=rng)


class TestTokenizer:
    def test_lowercase_word_split(self):
        assert tokenize("Who will Sudan host?") == ["who", "will", "sudan", "host", "?"]

    def test_digit_runs_kept(self):
        assert tokenize("2021-08-01") == ["2021", "-", "08", "-", "01"]

    def test_special_markers_survive(self):
        assert tokenize("a [SEP] b") == ["a", "[sep]", "b"]

    @given(st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126),
                   max_size=60))
    @settings(max_examples=100)
    def test_round_trip_preserves_token_multiset(self, text):
        toks = tokenize(text)
        assert sorted(tokenize(detokenize(toks))) == sorted(toks)


class TestVocab:
    def test_specials_reserved(self, vocab):
        assert vocab.tokens[CLS] == "[cls]"
        assert vocab.tokens[PAD] == "[pad]"
        assert vocab.tokens[UNK] == "[unk]"
        assert vocab.tokens[SEP] == "[sep]"

    def test_lexicographic_after_specials(self, vocab):
        rest = vocab.tokens[4:]
        assert rest == sorted(rest)

    def test_deterministic_build(self):
        assert build_token_vocab(CORPUS).tokens == build_token_vocab(CORPUS).tokens

    def test_unknown_maps_to_unk(self, vocab):
        ids = vocab.ids("zzzunseen")
        assert ids.tolist() == [CLS, UNK]

    def test_round_trip_file(self, vocab, tmp_path):
        save_token_vocab(vocab, tmp_path / "tok.tsv")
        assert load_token_vocab(tmp_path / "tok.tsv").tokens == vocab.tokens


class TestEncode:
    def test_purity_bit_exact(self, vocab, params):
        a = encode(CORPUS[0], vocab, params)
        b = encode(CORPUS[0], vocab, params)
        assert a == b

    def test_zero_projection_gives_zero_vector(self, vocab, params):
        params.proj_W[:] = 0.0
        params.proj_b[:] = 0.0
        v = encode("anything at all", vocab, params)
        assert not v.re.any() and not v.im.any()

    def test_output_dim_independent_of_length(self, vocab, params):
        for text in ("host", CORPUS[0], CORPUS[0] * 5):
            v = encode(text, vocab, params)
            assert v.dim == 4

    def test_all_unknown_text_still_encodes(self, vocab, params):
        v = encode("qqq zzz www", vocab, params)
        assert np.isfinite(v.re).all()

    def test_empty_text_rejected(self, vocab, params):
        with pytest.raises(ValueError):
            encode("", vocab, params)

    def test_pair_equals_sep_joined(self, vocab, params):
        q, c = "Who will Sudan host?", "Germany host Sudan"
        assert encode_pair(q, c, vocab, params) == encode(f"{q} [SEP] {c}", vocab, params)

    def test_pad_only_choice_equals_question_sep(self, vocab, params):
        q = "Who will Sudan host?"
        assert encode_pair(q, "[pad]", vocab, params) == encode(f"{q} [SEP]", vocab, params)

    def test_answer_tokens(self, vocab, params):
        y = encode_answer_token("yes", vocab, params)
        u = encode_answer_token("unknown", vocab, params)
        assert y == encode("yes", vocab, params)
        assert not (y == u)
        with pytest.raises(ValueError):
            encode_answer_token("maybe", vocab, params)


class TestBackward:
    def test_gradients_match_finite_differences(self, vocab, params, rng):
        ids = vocab.ids(CORPUS[0])
        d_out = rng.normal(size=8)

        def loss_of(p):
            out, _ = _forward_ids(ids, p)
            return float(out @ d_out)

        out, cache = _forward_ids(ids, params)
        grads = {k: np.zeros_like(v) for k, v in params.param_arrays().items()}
        backward_ids(cache, d_out, params, grads)
        eps = 1e-6
        for name, arr in params.param_arrays().items():
            flat = arr.ravel()
            g = grads[name].ravel()
            for i in rng.choice(flat.size, size=min(12, flat.size), replace=False):
                orig = flat[i]
                flat[i] = orig + eps
                lp = loss_of(params)
                flat[i] = orig - eps
                lm = loss_of(params)
                flat[i] = orig
                fd = (lp - lm) / (2 * eps)
                assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-9), name


def test_encoder_checkpoint_round_trip(vocab, params, tmp_path):
    save_encoder(params, tmp_path / "enc.bin")
    loaded = load_encoder(tmp_path / "enc.bin")
    for k, v in params.param_arrays().items():
        assert np.array_equal(loaded.param_arrays()[k], v)
