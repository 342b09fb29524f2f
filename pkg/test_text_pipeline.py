"""
Tweet normalization, vocabulary / embedding handling and the text CNN branch.
"""
import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_array_equal

from conftest import FIXTURE_TSV
from config.schema import train_config_for
from src.autodiff import ops
from src.autodiff.tensor import Tape, backward
from src.models.dataset import PairDataset
from src.models.fusion import build_model, predict
from src.models.trainer import train
from src.text.preprocessing import load_stopwords, preprocess_many, preprocess_tweet
from src.text.text_cnn import FEATURE_DIM, TextCnnParams, flat_width, pool_length, text_cnn_forward
from src.text.vocabulary import (
    EMBEDDING_DIM,
    OOV_INDEX,
    PAD_INDEX,
    EmbeddingTable,
    Vocabulary,
    build_vocab,
    encode_batch,
    read_embeddings,
    save_embeddings,
)
from src.utils.errors import ConfigurationError, FormatError

TORNADO_TWEET = "#Breaking Tornado warning for Lantana Rd south to Boca Raton. #BeSafe <USER>"


class TestPreprocess:
    def test_rule_chain(self):
        assert preprocess_tweet(TORNADO_TWEET) == [
            'breaking', 'tornado', 'warning', 'lantana', 'rd', 'south', 'boca', 'raton', 'besafe']

    @pytest.mark.parametrize("text", ["", "123 https://t.co/abc !!!", "   ", None])
    def test_inputs_that_normalize_to_nothing(self, text):
        assert preprocess_tweet(text) == []

    def test_urls_and_non_ascii_removed(self):
        tokens = preprocess_tweet("Café niño 🌀 flooding www.example.org/x http://bit.ly/y t.co/abc now")
        assert tokens == ['caf', 'nio', 'flooding']

    def test_retweet_marker_survives(self):
        assert preprocess_tweet("RT @redcross: shelters open")[:1] == ['rt']

    def test_idempotent_on_fixture_tweets(self):
        texts = pd.read_csv(FIXTURE_TSV, sep='\t', dtype=str)['tweet_text'].tolist() + [TORNADO_TWEET]
        for text in texts:
            tokens = preprocess_tweet(text)
            assert preprocess_tweet(' '.join(tokens)) == tokens

    def test_output_properties(self):
        stopwords = load_stopwords()
        tokens = preprocess_tweet("The 3 #Floods in Kerala!!! 2017 <URL> see https://t.co/xyz ñ and then... 100s")
        for token in tokens:
            assert token.isascii() and not token.isdigit()
            assert '#' not in token and token not in stopwords
        assert '100s' in tokens

    def test_bundled_stopword_list(self):
        stopwords = load_stopwords()
        assert len(stopwords) == 179
        assert {'for', 'to', 'the'} <= stopwords

    def test_parallel_preprocessing_keeps_order(self):
        texts = [f"flood report number {i} from zone{i}" for i in range(1200)]
        assert preprocess_many(texts, max_workers=4) == [preprocess_tweet(t) for t in texts]


class TestVocabulary:
    def test_reserved_indices(self):
        vocab = Vocabulary.from_corpus([['b', 'a'], ['b']])
        assert vocab.tokens == ['<pad>', '<unk>', 'b', 'a']
        assert vocab.lookup('never-seen') == OOV_INDEX
        assert PAD_INDEX == 0

    def test_min_count(self):
        vocab = Vocabulary.from_corpus([['a', 'b'], ['a']], min_count=2)
        assert vocab.tokens == ['<pad>', '<unk>', 'a']

    def test_rejects_bad_token_lists(self):
        with pytest.raises(ValueError):
            Vocabulary(['a', 'b'])
        with pytest.raises(ValueError):
            Vocabulary(['<pad>', '<unk>', 'x', 'x'])


class TestEmbeddings:
    def test_pretrained_rows_bit_exact(self, tmp_path, rng):
        vectors = rng.standard_normal((2, EMBEDDING_DIM)).astype(np.float32)
        path = tmp_path / 'vectors.txt'
        save_embeddings(path, ['flood', 'unrelated'], vectors)

        vocab, table = build_vocab([['flood', 'rescue'], ['flood']], path, seed=3)
        assert_array_equal(table.matrix[vocab.lookup('flood')], vectors[0])
        assert table.pretrained_rows == 1
        assert_array_equal(table.matrix[PAD_INDEX], np.zeros(EMBEDDING_DIM))
        random_rows = table.matrix[[OOV_INDEX, vocab.lookup('rescue')]]
        assert np.all(np.abs(random_rows) <= 0.25)

    def test_no_file_means_random_rows(self):
        vocab, table = build_vocab([['a', 'b', 'c']], seed=0)
        assert table.matrix.shape == (5, EMBEDDING_DIM)
        assert table.matrix.dtype == np.float32
        assert table.pretrained_rows == 0

    def test_round_trip(self, tmp_path, rng):
        vectors = rng.standard_normal((3, EMBEDDING_DIM)).astype(np.float32)
        path = tmp_path / 'vectors.txt'
        save_embeddings(path, ['a', 'b', 'c'], vectors)
        loaded = read_embeddings(path)
        assert_array_equal(loaded['c'], vectors[2])

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / 'broken.txt'
        good = 'flood ' + ' '.join(['0.1'] * EMBEDDING_DIM)
        path.write_text(f"2 {EMBEDDING_DIM}\n{good}\nrescue 0.1 0.2\n", encoding='utf-8')
        with pytest.raises(FormatError) as excinfo:
            read_embeddings(path)
        assert excinfo.value.line == 3

    def test_wrong_dimension_header(self, tmp_path):
        path = tmp_path / 'small.txt'
        path.write_text("1 50\nflood " + ' '.join(['0'] * 50) + "\n", encoding='utf-8')
        with pytest.raises(FormatError) as excinfo:
            read_embeddings(path)
        assert excinfo.value.line == 1


class TestEncodeBatch:
    @pytest.fixture
    def vocab(self):
        return Vocabulary(['<pad>', '<unk>'] + [f"t{i}" for i in range(1, 8)])

    def test_right_padding(self, vocab):
        assert_array_equal(encode_batch([['t1', 't2', 't3']], vocab, 5), [[2, 3, 4, 0, 0]])

    def test_unknown_token(self, vocab):
        assert encode_batch([['zzz', 't1']], vocab, 3)[0, 0] == OOV_INDEX

    def test_truncates_the_tail(self, vocab):
        tokens = [f"t{i}" for i in range(1, 8)]
        assert_array_equal(encode_batch([tokens], vocab, 5), [[2, 3, 4, 5, 6]])

    def test_max_len_below_smallest_window(self, vocab):
        with pytest.raises(ConfigurationError):
            encode_batch([['t1']], vocab, 1)


def small_text_branch(max_len=25, num_classes=2, vocab_size=40, hidden=500, seed=0):
    matrix = np.random.default_rng(seed).uniform(-0.25, 0.25, (vocab_size, EMBEDDING_DIM)).astype(np.float32)
    matrix[PAD_INDEX] = 0
    return TextCnnParams(EmbeddingTable(matrix), max_len, num_classes, hidden=hidden, seed=seed)


class TestTextCnn:
    def test_pool_length_matches_window(self):
        assert [pool_length(w, 25) for w in (2, 3, 4)] == [2, 3, 4]
        assert pool_length(4, 5) == 2
        assert flat_width(25) == 100 * 12 + 150 * 7 + 200 * 5

    def test_logits_and_features_shapes(self, rng):
        params = small_text_branch()
        indices = rng.integers(0, 40, size=(32, 25))
        assert text_cnn_forward(indices, params, 'logits').shape == (32, 2)
        assert text_cnn_forward(indices, params, 'features').shape == (32, FEATURE_DIM)

    def test_shape_independent_of_content(self):
        params = small_text_branch(max_len=6, num_classes=5)
        zeros = np.zeros((3, 6), dtype=np.int64)
        ones = np.ones((3, 6), dtype=np.int64)
        assert text_cnn_forward(zeros, params).shape == text_cnn_forward(ones, params).shape == (3, 5)

    def test_inference_is_bit_deterministic(self, rng):
        params = small_text_branch(max_len=8)
        indices = rng.integers(0, 40, size=(4, 8))
        assert_array_equal(text_cnn_forward(indices, params).data, text_cnn_forward(indices, params).data)

    def test_short_sequences_rejected(self):
        with pytest.raises(ConfigurationError):
            small_text_branch(max_len=3)

    def test_wrong_index_width(self, rng):
        params = small_text_branch(max_len=6)
        with pytest.raises(ValueError):
            text_cnn_forward(rng.integers(0, 40, size=(2, 7)), params)

    def test_padding_row_frozen_by_gradient(self, rng):
        params = small_text_branch(max_len=6, hidden=16)
        indices = np.array([[3, 4, 5, 0, 0, 0], [6, 7, 0, 0, 0, 0]])
        with Tape():
            logits = text_cnn_forward(indices, params, 'logits', True, np.random.default_rng(0))
            loss, _ = ops.softmax_cross_entropy(logits, [0, 1])
            backward(loss)
        assert_array_equal(params["text/embedding"].grad[PAD_INDEX], np.zeros(EMBEDDING_DIM))
        assert np.any(params["text/embedding"].grad[3] != 0)


def test_text_cnn_overfits_a_disjoint_vocabulary_corpus():
    rng = np.random.default_rng(5)
    crisis = ['flood', 'rescue', 'damage', 'evacuate', 'shelter', 'collapse']
    casual = ['coffee', 'movie', 'music', 'brunch', 'selfie', 'weekend']
    tweets, labels = [], []
    for i in range(16):
        words = crisis if i % 2 == 0 else casual
        tweets.append([str(w) for w in rng.choice(words, size=rng.integers(3, 7))])
        labels.append(i % 2)
    labels = np.array(labels)

    vocab, table = build_vocab(tweets, seed=0)
    text = TextCnnParams(table, 6, 2, hidden=64, seed=0)
    config = train_config_for('text', lr=0.01, max_epochs=100, batch_size=8, text_hidden=64, seed=0)
    model = build_model(config, text_branch=text, num_classes=2)
    dataset = PairDataset(labels=labels, text=encode_batch(tweets, vocab, 6))

    result = train(config, dataset, dataset, model)

    assert result.best_dev_accuracy == 1.0
    assert result.epochs_run <= 100
    predicted, probs = predict(model, dataset.text)
    assert_array_equal(predicted, labels)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
