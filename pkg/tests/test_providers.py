import math
import os
import unittest
from unittest.mock import MagicMock, patch

import requests

from structrag.config import ProviderConfig
from structrag.errors import ProviderAuthError, ProviderError, RetriesExhaustedError
from structrag.providers import (
    CannedChatProvider, EchoChatProvider, GeminiChatProvider, GeminiEmbeddingProvider, HashEmbeddingProvider,
    OpenAIChatProvider, OpenAIEmbeddingProvider, OverlapJudgeProvider, ScriptedChatProvider,
    make_chat_provider, make_embedding_provider,
)

KEY_ENV = "STRUCTRAG_TEST_KEY"


def _cfg(**kw):
    base = dict(kind="openai", api_key_env=KEY_ENV, max_attempts=3, backoff_base=0, backoff_max=0)
    base.update(kw)
    return ProviderConfig(**base)


def _response(status, payload=None):
    resp = MagicMock(status_code=status, text="body")
    resp.json.return_value = payload or {}
    return resp


@patch.dict(os.environ, {KEY_ENV: "sk-test-123"})
class TestOpenAIProviders(unittest.TestCase):
    def test_retries_transient_then_succeeds(self):
        session = MagicMock()
        ok = _response(200, {"data": [{"index": 1, "embedding": [0, 1]}, {"index": 0, "embedding": [1, 0]}]})
        session.post.side_effect = [_response(503), _response(429), ok]
        provider = OpenAIEmbeddingProvider(_cfg(), session=session)
        self.assertEqual(provider.embed_batch(["a", "b"]), [[1.0, 0.0], [0.0, 1.0]])
        self.assertEqual(session.post.call_count, 3)
        url = session.post.call_args[0][0]
        self.assertTrue(url.endswith("/embeddings"))
        self.assertEqual(session.post.call_args[1]["headers"]["Authorization"], "Bearer sk-test-123")

    def test_retries_exhausted(self):
        session = MagicMock()
        session.post.side_effect = requests.ConnectionError("reset")
        provider = OpenAIChatProvider(_cfg(), session=session)
        with self.assertRaises(RetriesExhaustedError) as ctx:
            provider.complete("hi")
        self.assertEqual(ctx.exception.attempts, 3)
        self.assertEqual(session.post.call_count, 3)

    def test_auth_failure_is_not_retried(self):
        session = MagicMock()
        session.post.return_value = _response(401)
        provider = OpenAIChatProvider(_cfg(), session=session)
        with self.assertRaises(ProviderAuthError):
            provider.complete("hi")
        self.assertEqual(session.post.call_count, 1)

    def test_client_error_is_not_retried(self):
        session = MagicMock()
        session.post.return_value = _response(400)
        with self.assertRaises(ProviderError):
            OpenAIChatProvider(_cfg(), session=session).complete("hi")
        self.assertEqual(session.post.call_count, 1)

    def test_chat_completion(self):
        session = MagicMock()
        session.post.return_value = _response(200, {"choices": [{"message": {"content": "42"}}]})
        provider = OpenAIChatProvider(_cfg(model="gpt-x"), session=session)
        self.assertEqual(provider.complete("What?"), "42")
        body = session.post.call_args[1]["json"]
        self.assertEqual(body["model"], "gpt-x")
        self.assertEqual(body["temperature"], 0)
        self.assertEqual(body["messages"][0]["content"], "What?")

    def test_malformed_chat_response(self):
        session = MagicMock()
        session.post.return_value = _response(200, {"choices": []})
        with self.assertRaises(ProviderError):
            OpenAIChatProvider(_cfg(), session=session).complete("x")

    def test_credentials_never_logged(self):
        session = MagicMock()
        session.post.return_value = _response(200, {"choices": [{"message": {"content": "ok"}}]})
        with self.assertLogs("structrag.providers", level="DEBUG") as logs:
            OpenAIChatProvider(_cfg(), session=session).complete("hi")
        self.assertTrue(logs.output)
        self.assertFalse(any("sk-test-123" in line for line in logs.output))


class TestMissingCredential(unittest.TestCase):
    @patch.dict(os.environ, {}, clear=True)
    @patch("structrag.config.load_dotenv")
    def test_no_key_fails_before_any_request(self, _):
        session = MagicMock()
        with self.assertRaises(ProviderAuthError):
            OpenAIChatProvider(_cfg(), session=session).complete("hi")
        session.post.assert_not_called()


class ResourceExhausted(Exception):
    """Stands in for google.api_core.exceptions.ResourceExhausted."""


@patch.dict(os.environ, {KEY_ENV: "g-key"})
class TestGeminiProviders(unittest.TestCase):
    @patch("structrag.providers.genai")
    def test_embed(self, mock_genai):
        mock_genai.embed_content.return_value = {"embedding": [[0.5, 0.5], [1, 0]]}
        provider = GeminiEmbeddingProvider(_cfg(kind="gemini", model="models/embedding-001"))
        self.assertEqual(provider.embed_batch(["a", "b"]), [[0.5, 0.5], [1.0, 0.0]])
        mock_genai.configure.assert_called_once_with(api_key="g-key")

    @patch("structrag.providers.genai")
    def test_generate_retries_quota_errors(self, mock_genai):
        model = MagicMock()
        model.generate_content.side_effect = [ResourceExhausted("quota"), MagicMock(text=" fine ")]
        mock_genai.GenerativeModel.return_value = model
        provider = GeminiChatProvider(_cfg(kind="gemini", model="gemini-pro"))
        self.assertEqual(provider.complete("prompt"), "fine")
        self.assertEqual(model.generate_content.call_count, 2)


class TestMocks(unittest.TestCase):
    def test_hash_embeddings_are_deterministic_unit_vectors(self):
        provider = HashEmbeddingProvider(dim=16)
        a1, b = provider.embed_batch(["alpha", "beta"])
        (a2,) = HashEmbeddingProvider(dim=16).embed_batch(["alpha"])
        self.assertEqual(a1, a2)
        self.assertNotEqual(a1, b)
        self.assertAlmostEqual(math.sqrt(sum(x * x for x in a1)), 1.0)
        self.assertEqual(provider.calls, 1)

    def test_chat_mocks(self):
        self.assertEqual(EchoChatProvider().complete("p"), "p")
        self.assertEqual(CannedChatProvider("yes").complete("p"), "yes")
        scripted = ScriptedChatProvider(["one", "two"])
        self.assertEqual([scripted.complete("a"), scripted.complete("b")], ["one", "two"])
        self.assertEqual(scripted.prompts, ["a", "b"])
        with self.assertRaises(ProviderError):
            scripted.complete("c")

    def test_overlap_judge_is_order_insensitive(self):
        judge = OverlapJudgeProvider()
        prompt = "[Question]\nnet profit 2021\n[Candidate A]\nnet profit was 5\n[Candidate B]\nrevenue\n[Instructions]\n..."
        swapped = "[Question]\nnet profit 2021\n[Candidate A]\nrevenue\n[Candidate B]\nnet profit was 5\n[Instructions]\n..."
        self.assertEqual(judge.complete(prompt), "score_a=6.7; score_b=0.0")
        self.assertEqual(judge.complete(swapped), "score_a=0.0; score_b=6.7")

    def test_factories(self):
        self.assertIsInstance(make_embedding_provider(ProviderConfig(dim=8)), HashEmbeddingProvider)
        self.assertIsInstance(make_chat_provider(ProviderConfig()), EchoChatProvider)
        self.assertIsInstance(make_chat_provider(ProviderConfig(), role="judge"), OverlapJudgeProvider)
        self.assertIsInstance(make_chat_provider(ProviderConfig(kind="openai")), OpenAIChatProvider)


if __name__ == '__main__':
    unittest.main()
