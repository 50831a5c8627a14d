"""Remote LLM judge speaking the chat-completions wire shape.

Request body::

    {"model": ..., "temperature": 0,
     "messages": [{"role": "system", "content": <prompt>},
                  {"role": "user", "content": "DOCUMENTS:\\n...\\n\\nQUESTION:\\n..."}]}

The reply text is read from ``choices[0].message.content``. The user turn
asks the judge to finish with ``VERDICT: RELEVANT`` or ``VERDICT: NOT
RELEVANT``; that line decides the label. Replies without it fall back to a
keyword match and otherwise count as unparseable.
"""

from __future__ import annotations

import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import httpx

from relgrade.corpus import Corpus, PairRecord
from relgrade.errors import UsageError
from relgrade.grading.verdicts import GraderVerdict

logger = logging.getLogger(__name__)

TOKEN_ENV = "RELGRADE_JUDGE_TOKEN"

DEFAULT_SYSTEM_PROMPT = (
    "Please analyze the contents of DOCUMENTS and determine whether it is "
    "relevant in answering the QUESTION"
)

VERDICT_INSTRUCTION = (
    "Finish your answer with exactly one final line: "
    "VERDICT: RELEVANT or VERDICT: NOT RELEVANT"
)

_VERDICT_LINE = re.compile(r"^\W*verdict\W*[:=]\s*(not\s+relevant|irrelevant|relevant)\W*$", re.I)
_NEGATIVE = re.compile(r"\b(not\s+relevant|irrelevant)\b", re.I)
_POSITIVE = re.compile(r"\brelevant\b", re.I)


@dataclass
class JudgeConfig:
    endpoint: str
    model: str
    system_prompt: str = DEFAULT_SYSTEM_PROMPT
    timeout: float = 60.0
    max_retries: int = 2
    parallelism: int = 4
    backoff: float = 0.5
    token_env: str = TOKEN_ENV

    def __post_init__(self) -> None:
        if self.parallelism < 1:
            raise UsageError("parallelism must be at least 1")
        if self.max_retries < 0:
            raise UsageError("max_retries must be non-negative")
        if self.timeout <= 0:
            raise UsageError("timeout must be positive")

    def token(self) -> str | None:
        return os.environ.get(self.token_env) or None


def build_user_message(document: str, question: str) -> str:
    return f"DOCUMENTS:\n{document}\n\nQUESTION:\n{question}\n\n{VERDICT_INSTRUCTION}"


def build_request(config: JudgeConfig, document: str, question: str) -> dict:
    return {
        "model": config.model,
        "temperature": 0,
        "messages": [
            {"role": "system", "content": config.system_prompt},
            {"role": "user", "content": build_user_message(document, question)},
        ],
    }


def parse_verdict(reply: str) -> bool | None:
    """Map a judge reply to a label; ``None`` if it cannot be decided."""
    for line in reversed(reply.strip().splitlines()):
        match = _VERDICT_LINE.match(line.strip())
        if match:
            return match.group(1).lower() == "relevant"
    if _NEGATIVE.search(reply):
        return False
    if _POSITIVE.search(reply):
        return True
    return None


def _reply_text(payload) -> str:
    return payload["choices"][0]["message"]["content"]


class JudgeError(Exception):
    """One attempt failed; ``retry`` says whether another attempt may help."""

    def __init__(self, message: str, retry: bool = True) -> None:
        super().__init__(message)
        self.retry = retry


class JudgeClient:
    """Grades single pairs against the configured endpoint.

    Pass ``client`` to inject a preconfigured :class:`httpx.Client` (tests use
    :class:`httpx.MockTransport`).
    """

    def __init__(self, config: JudgeConfig, client: httpx.Client | None = None) -> None:
        self.config = config
        headers = {"Content-Type": "application/json"}
        token = config.token()
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._owns_client = client is None
        self._client = client or httpx.Client(timeout=config.timeout)
        self._headers = headers

    def close(self) -> None:
        if self._owns_client:
            self._client.close()

    def __enter__(self) -> "JudgeClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _attempt(self, body: dict) -> tuple[bool, str]:
        try:
            response = self._client.post(
                self.config.endpoint, json=body, headers=self._headers,
                timeout=self.config.timeout,
            )
        except httpx.TimeoutException as exc:
            raise JudgeError(f"timeout: {exc}") from None
        except httpx.TransportError as exc:
            raise JudgeError(f"unreachable: {exc}") from None
        if response.status_code == 429 or response.status_code >= 500:
            raise JudgeError(f"HTTP {response.status_code}")
        if response.status_code >= 400:
            raise JudgeError(f"HTTP {response.status_code}: {response.text[:200]}", retry=False)
        try:
            text = _reply_text(response.json())
        except (ValueError, KeyError, IndexError, TypeError):
            raise JudgeError("malformed response body") from None
        verdict = parse_verdict(text)
        if verdict is None:
            raise JudgeError(f"unparseable reply: {text[:200]!r}")
        return verdict, text

    def grade(self, pair: PairRecord, document: str, question: str) -> GraderVerdict:
        body = build_request(self.config, document, question)
        errors = []
        for attempt in range(self.config.max_retries + 1):
            if attempt and self.config.backoff:
                time.sleep(self.config.backoff * 2 ** (attempt - 1))
            try:
                relevant, text = self._attempt(body)
            except JudgeError as exc:
                errors.append(str(exc))
                logger.debug("judge attempt %d for %s failed: %s", attempt + 1, pair.key, exc)
                if not exc.retry:
                    break
                continue
            return GraderVerdict.for_pair(pair, relevant, text)
        return GraderVerdict.for_pair(pair, None, "ungraded: " + "; ".join(errors))


def grade_with_judge(
    pairs: Sequence[PairRecord],
    corpus: Corpus,
    config: JudgeConfig,
    client: httpx.Client | None = None,
) -> list[GraderVerdict]:
    """Grade every pair with the remote judge, at most ``config.parallelism`` in flight.

    Verdicts come back in input order. Pairs that still fail after the
    retries get ``relevant=None``.
    """
    jobs = []
    for pair in pairs:
        doc = corpus.documents.get(pair.doc_id)
        query = corpus.queries.get(pair.query_id)
        if doc is None or query is None:
            raise UsageError(f"pair {pair.key} references an unknown query or document")
        if not doc.text or not query.text:
            raise UsageError(f"pair {pair.key} lacks document or query text")
        jobs.append((pair, doc.text, query.text))
    if not jobs:
        return []
    with JudgeClient(config, client) as judge:
        if config.parallelism == 1:
            verdicts = [judge.grade(*job) for job in jobs]
        else:
            with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
                verdicts = list(pool.map(lambda job: judge.grade(*job), jobs))
    failed = sum(1 for v in verdicts if not v.graded)
    if failed:
        logger.warning("%d of %d pairs left ungraded by the judge", failed, len(verdicts))
    return verdicts
