"""Deterministic offline providers.

The mock chat provider is a pure function of the request text: it recognizes
the toolkit's prompt layouts by their structural markers and answers with
rule-based output (verdicts from token-overlap rules, sectioned summaries cut
from the page text, template-built questions). Together with the fixture
search corpus and the hashed bag-of-terms embedder this makes every pipeline
stage runnable with no network and byte-identical across runs.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ..errors import EmbeddingItemError, PreconditionError
from ..storage import digest
from .base import CallLog, ChatRequest, ChatResponse, SearchResult, dedupe_results

MOCK_EMBED_DIM = 256
MOCK_TEXT_LIMIT = 20000

_WORD_RE = re.compile(r"[\w']+", re.UNICODE)
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?。！？])\s+")

STOPWORDS = {
    "a", "an", "the", "of", "in", "on", "at", "to", "and", "or", "is", "are", "was",
    "were", "be", "been", "it", "its", "this", "that", "these", "those", "with",
    "for", "as", "by", "from", "their", "they", "he", "she", "his", "her", "most",
    "more", "very", "such", "than", "into", "about", "during", "while", "when",
    "de", "la", "el", "en", "los", "las", "una", "un", "es", "son", "del", "que",
    "的", "是", "在", "了", "和",
}

NEGATION_TOKENS = {
    "not", "never", "no", "none", "nobody", "nothing", "rarely", "forbidden",
    "nunca", "jamás", "不", "没有", "从不",
}

CULTURE_ALIASES = {
    "spanish": {"spanish", "spain", "español", "española", "españa", "spaniards"},
    "chinese": {"chinese", "china", "中国", "中国人", "中华"},
}


def tokens(text: str) -> list[str]:
    return [t.lower() for t in _WORD_RE.findall(text)]


def content_tokens(text: str) -> list[str]:
    out = []
    for t in tokens(text):
        t = t.rstrip("s") if len(t) > 4 else t
        if t and t not in STOPWORDS:
            out.append(t)
    return out


def normalize_text(text: str) -> str:
    return " ".join(tokens(text))


def normalize_query(text: str) -> str:
    return " ".join(text.lower().split())


def has_negation(text: str) -> bool:
    toks = set(tokens(text))
    return bool(toks & NEGATION_TOKENS) or any(n in text for n in ("不", "没有", "从不"))


def overlap_ratio(claim: str, evidence: str) -> float:
    """Fraction of the claim's content tokens found in the evidence."""
    claim_toks = content_tokens(claim)
    if not claim_toks:
        return 0.0
    evidence_toks = set(content_tokens(evidence))
    hit = sum(1 for t in claim_toks if t in evidence_toks)
    return hit / len(claim_toks)


def strip_negations(text: str) -> str:
    kept = [t for t in text.split() if t.lower().strip(".,;:") not in NEGATION_TOKENS]
    return " ".join(kept)


def split_sentences(text: str) -> list[str]:
    out: list[str] = []
    for para in text.splitlines():
        para = para.strip()
        if not para:
            continue
        for sent in _SENTENCE_SPLIT.split(para):
            sent = sent.strip()
            if sent:
                out.append(sent)
    return out


def tf_label(statements: Sequence[str], max_words: int = 2) -> str:
    """Deterministic cluster label: the top term-frequency content words."""
    counts: dict[str, int] = {}
    display: dict[str, str] = {}
    order: dict[str, tuple[int, int]] = {}
    for i, stmt in enumerate(statements):
        for raw in tokens(stmt):
            if raw in STOPWORDS:
                continue
            key = raw.rstrip("s") if len(raw) > 4 else raw
            if not key:
                continue
            counts[key] = counts.get(key, 0) + 1
            display.setdefault(key, raw)
            order.setdefault(key, (i, len(order)))
    if not counts:
        return "General"
    ranked = sorted(counts, key=lambda t: (-counts[t], order[t]))
    return " ".join(display[k].capitalize() for k in ranked[:max_words])


# ---------------------------------------------------------------------------
# Embeddings


class MockEmbedder:
    """Deterministic hashed bag-of-terms projection onto a fixed-size vector."""

    provider_id = "mock:embed"

    def __init__(self, dim: int = MOCK_EMBED_DIM, call_log: CallLog | None = None):
        self._dim = dim
        self._call_log = call_log

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise PreconditionError("embed requires at least one text")
        vectors: list[list[float]] = []
        for i, text in enumerate(texts):
            if len(text) > MOCK_TEXT_LIMIT:
                raise EmbeddingItemError(i, f"text length {len(text)} exceeds limit {MOCK_TEXT_LIMIT}")
            vec = [0.0] * self._dim
            for tok in tokens(text):
                h = int(digest(tok), 16)
                idx = h % self._dim
                sign = 1.0 if (h >> 16) % 2 == 0 else -1.0
                vec[idx] += sign
            norm = sum(v * v for v in vec) ** 0.5
            if norm > 0:
                vec = [v / norm for v in vec]
            vectors.append(vec)
        if self._call_log is not None:
            self._call_log.record(self.provider_id, "\x1f".join(texts), 0.0, "ok")
        return vectors


# ---------------------------------------------------------------------------
# Search and fetch over the bundled fixture corpus


@dataclass(frozen=True)
class FixturePage:
    url: str
    title: str
    snippet: str
    body: str
    queries: tuple[str, ...]


def load_fixture_corpus(path: str | Path) -> list[FixturePage]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    pages = []
    for raw in doc["pages"]:
        pages.append(
            FixturePage(
                url=raw["url"],
                title=raw["title"],
                snippet=raw.get("snippet", ""),
                body=raw["body"],
                queries=tuple(normalize_query(q) for q in raw.get("queries", [])),
            )
        )
    return pages


def default_fixture_path() -> Path:
    import importlib.resources

    return Path(str(importlib.resources.files("culturebench").joinpath("data/fixture_corpus.json")))


class MockSearchProvider:
    """Serves the bundled fixture corpus keyed by normalized query text."""

    provider_id = "mock:search"

    def __init__(self, pages: Sequence[FixturePage] | None = None, call_log: CallLog | None = None):
        self._pages = list(pages) if pages is not None else load_fixture_corpus(default_fixture_path())
        self._call_log = call_log

    def search(self, query_text: str, top_k: int = 5) -> list[SearchResult]:
        if top_k < 1:
            raise PreconditionError("top_k must be >= 1")
        norm = normalize_query(query_text)
        raw = [
            SearchResult(url=p.url, title=p.title, snippet=p.snippet, rank=i + 1)
            for i, p in enumerate(self._pages)
            if norm in p.queries
        ]
        results = dedupe_results(raw)[:top_k]
        if self._call_log is not None:
            self._call_log.record(self.provider_id, query_text, 0.0, "ok")
        return results


class MockFetcher:
    """Resolves fixture URLs to their page bodies."""

    provider_id = "mock:fetch"

    def __init__(self, pages: Sequence[FixturePage] | None = None, call_log: CallLog | None = None):
        pages = list(pages) if pages is not None else load_fixture_corpus(default_fixture_path())
        self._by_url = {p.url: p for p in pages}
        self._call_log = call_log

    def fetch(self, url: str) -> str:
        if self._call_log is not None:
            self._call_log.record(self.provider_id, url, 0.0, "ok" if url in self._by_url else "missing")
        page = self._by_url.get(url)
        if page is None:
            raise KeyError(f"no fixture page for {url}")
        return page.body


# ---------------------------------------------------------------------------
# Verdict rules shared by the mock chat provider and the scripted judge


def qc_verdict(question: str, answer: str, knowledge: str) -> str:
    """Consistency rule over a (question, answer, knowledge) triple."""
    answer = answer.strip()
    if not answer:
        return "VERDICT: REJECTED(WRONG_ANSWER)\nThe answer is empty."
    if answer.lower().rstrip(".") in {"true", "false", "verdadero", "falso"}:
        stem = re.sub(r"(?i)^true or false:\s*", "", question).strip()
        claim = strip_negations(stem)
        if overlap_ratio(claim, knowledge) >= 0.5:
            return "VERDICT: VERIFIED\nThe statement traces back to the reference knowledge."
        return "VERDICT: REJECTED(UNANSWERABLE)\nThe statement is not grounded in the knowledge."
    neg_answer = has_negation(answer)
    neg_knowledge = has_negation(knowledge)
    core = strip_negations(answer)
    ratio = overlap_ratio(core, knowledge)
    if neg_answer and not neg_knowledge and ratio >= 0.5:
        return "VERDICT: REJECTED(CONTRADICTION)\nThe answer negates what the knowledge states."
    if ratio >= 0.5:
        return "VERDICT: VERIFIED\nQuestion, answer, and knowledge are consistent."
    return "VERDICT: REJECTED(WRONG_ANSWER)\nThe answer does not follow from the knowledge."


def judge_verdict(reference_answer: str, test_answer: str) -> str:
    """Conflict rule: a test answer conflicting with the reference is incorrect."""
    test_answer = test_answer.strip()
    if not test_answer:
        return "VERDICT: INCORRECT\nNo answer was given."
    neg_test = has_negation(test_answer)
    neg_ref = has_negation(reference_answer)
    core = strip_negations(test_answer)
    ratio = overlap_ratio(core, reference_answer)
    if neg_test != neg_ref and ratio >= 0.4:
        return "VERDICT: INCORRECT\nThe answer conflicts with the reference knowledge."
    if ratio >= 0.5 or overlap_ratio(reference_answer, test_answer) >= 0.5:
        return "VERDICT: CORRECT\nThe key content aligns with the reference."
    return "VERDICT: INCORRECT\nThe answer misses the key content of the reference."


# ---------------------------------------------------------------------------
# Prompt-text field extraction (the mock parses the toolkit's own templates)


def _between(text: str, start: str, end: str) -> str:
    i = text.find(start)
    if i < 0:
        return ""
    i += len(start)
    j = text.find(end, i)
    return text[i:j] if j >= 0 else text[i:]


def _fenced(text: str, fence: str) -> str:
    parts = text.split(fence)
    if len(parts) >= 3:
        return parts[1].strip()
    return ""


def _field(text: str, label: str, stop_labels: Sequence[str]) -> str:
    i = text.find(label)
    if i < 0:
        return ""
    i += len(label)
    rest = text[i:]
    cut = len(rest)
    for stop in stop_labels:
        j = rest.find(stop)
        if 0 <= j < cut:
            cut = j
    return rest[:cut].strip()


def _negate(statement: str) -> str:
    for verb in (" is ", " are ", " es ", " son "):
        if verb in statement:
            return statement.replace(verb, verb.rstrip() + " not ", 1)
    return "It is not true that " + statement[0].lower() + statement[1:]


class MockChatProvider:
    """Rule-based stand-in for the chat model behind every pipeline prompt."""

    provider_id = "mock:chat"

    def __init__(self, call_log: CallLog | None = None):
        self._call_log = call_log

    def chat(self, request: ChatRequest) -> ChatResponse:
        text = self._respond(request)
        if self._call_log is not None:
            self._call_log.record(self.provider_id, request.system_text + "\n" + request.user_text, 0.0, "ok")
        return ChatResponse(
            text=text,
            provider_id=self.provider_id,
            token_counts=(len(request.user_text) // 4, len(text) // 4),
        )

    def _respond(self, request: ChatRequest) -> str:
        prompt = request.user_text
        if "VERDICT: REJECTED(UNANSWERABLE)" in prompt:
            return self._qc(prompt)
        if "VERDICT: CORRECT" in prompt:
            return self._judge(prompt)
        if "VERDICT: ENTAILED" in prompt:
            return self._verify(prompt)
        if "VERDICT: RELEVANT" in prompt:
            return self._filter(prompt)
        if "Source of information:" in prompt or "Fuente de información:" in prompt:
            return self._summarize(prompt)
        if "Reference Answer:" in prompt:
            return self._generate(prompt)
        if "at most 6 words" in prompt:
            statements = prompt.split("\n\n", 1)[-1]
            return tf_label([line for line in statements.splitlines() if line.strip()])
        return self._answer(prompt)

    # -- screening ---------------------------------------------------------

    def _filter(self, prompt: str) -> str:
        m = re.search(r'cultural dimension\s+"([^"]+)" in (.+?) culture', prompt)
        dimension = m.group(1) if m else ""
        culture = (m.group(2) if m else "").lower()
        body = _fenced(prompt, "===")
        if len(body) < 40:
            return "VERDICT: BOILERPLATE\nThe page has no usable content."
        body_toks = set(content_tokens(body))
        dim_hit = any(t in body_toks for t in content_tokens(dimension))
        aliases = CULTURE_ALIASES.get(culture, {culture})
        culture_hit = any(a in body.lower() for a in aliases)
        if not dim_hit:
            return "VERDICT: OFF_TOPIC\nThe page does not discuss this dimension."
        if not culture_hit:
            return "VERDICT: WRONG_CULTURE\nThe page discusses a different culture."
        return "VERDICT: RELEVANT\nThe page covers the dimension for the target culture."

    def _summarize(self, prompt: str) -> str:
        spanish = "Fuente de información:" in prompt
        body = _fenced(prompt, '"""') if spanish else _fenced(prompt, "===")
        sentences = [
            s for s in split_sentences(body)
            if len(s.split()) >= 5 or (len(s) >= 12 and " " not in s)
        ]
        sections = []
        for sent in sentences[:4]:
            words = sent.rstrip(".!?").split()
            title = " ".join(words[:5])
            if spanish:
                sections.append(
                    f"Título: {title}\nDescripción: {sent}\nFuente de información: \"{sent}\""
                )
            else:
                sections.append(
                    f"Title: {title}\nDescription of the feature: {sent}\nSource of information: \"{sent}\""
                )
        return "\n\n".join(sections)

    def _verify(self, prompt: str) -> str:
        statement = _field(prompt, "Statement extracted", ["Quoted source span:"])
        statement = statement.split(":", 1)[-1].strip()
        body = _fenced(prompt, "===")
        if normalize_text(statement) and normalize_text(statement) in normalize_text(body):
            return "VERDICT: ENTAILED\nThe statement appears in the source."
        core = strip_negations(statement)
        if has_negation(statement) and not has_negation(body) and overlap_ratio(core, body) >= 0.6:
            return "VERDICT: NOT_ENTAILED\nThe statement negates the source."
        if overlap_ratio(statement, body) >= 0.6:
            return "VERDICT: ENTAILED\nThe statement paraphrases the source."
        return "VERDICT: NOT_ENTAILED\nThe source does not support the statement."

    def _qc(self, prompt: str) -> str:
        question = _field(prompt, "Question:", ["Provided answer:"])
        answer = _field(prompt, "Provided answer:", ["Reference knowledge:"])
        knowledge = _field(prompt, "Reference knowledge:", ["Answer on the first line"])
        return qc_verdict(question, answer, knowledge)

    def _judge(self, prompt: str) -> str:
        reference = _field(prompt, "Reference answer:", ["Model answer:"])
        test = _field(prompt, "Model answer:", ["Answer on the first line"])
        return judge_verdict(reference, test)

    # -- question generation -------------------------------------------------

    _QUESTION_STEMS = {
        "FACTUAL": "According to the practices described, which statement is accurate?",
        "CONCEPTUAL": "Which statement best explains the idea behind the practices described?",
        "MISLEADING": "Which statement is an accurate description rather than a stereotype?",
        "MULTI_HOP": "Taking all the described points together, which statement is consistent with them?",
    }

    def _generate(self, prompt: str) -> str:
        context = _fenced(prompt, "'''")
        statements = [re.sub(r"^\d+\.\s*", "", line.strip()) for line in context.splitlines() if line.strip()]
        if not statements:
            return "I cannot generate a question without context."
        if "factual question" in prompt:
            content_type = "FACTUAL"
        elif "conceptual explanation" in prompt:
            content_type = "CONCEPTUAL"
        elif "misleading question" in prompt:
            content_type = "MISLEADING"
        else:
            content_type = "MULTI_HOP"
        correct = statements[0]
        if "options labeled A) to D)" in prompt:
            return self._generate_choice(content_type, correct, statements)
        if "True or False" in prompt:
            return self._generate_true_false(correct)
        if "fill-in-the-blank" in prompt or "short-answer" in prompt:
            return self._generate_short(correct)
        return self._generate_essay(statements)

    def _generate_choice(self, content_type: str, correct: str, statements: list[str]) -> str:
        distractors: list[str] = []
        for cand in [_negate(correct)] + [_negate(s) for s in statements[1:]] + [
            "It is rarely the case that " + correct[0].lower() + correct[1:],
            "Visitors usually observe the opposite of this.",
        ]:
            if cand != correct and cand not in distractors:
                distractors.append(cand)
            if len(distractors) == 3:
                break
        rot = int(digest(correct), 16) % 4
        options = distractors[:rot] + [correct] + distractors[rot:]
        letters = ["A", "B", "C", "D"]
        lines = [self._QUESTION_STEMS[content_type]]
        lines += [f"{letters[i]}) {opt}" for i, opt in enumerate(options[:4])]
        answer = letters[options.index(correct)]
        return "Question:\n" + "\n".join(lines) + f"\n\nReference Answer: {answer}"

    def _generate_true_false(self, statement: str) -> str:
        if int(digest(statement), 16) % 2 == 0:
            return f"Question:\nTrue or false: {statement}\n\nReference Answer: True"
        return f"Question:\nTrue or false: {_negate(statement)}\n\nReference Answer: False"

    def _generate_short(self, statement: str) -> str:
        words = statement.rstrip(".!?。").split()
        candidates = [i for i, w in enumerate(words) if any(len(t) >= 4 for t in _WORD_RE.findall(w))]
        blank_idx = candidates[-1] if candidates else len(words) - 1
        found = _WORD_RE.findall(words[blank_idx])
        answer_word = found[0] if found else words[blank_idx]
        blanked = words[:blank_idx] + ["____"] + words[blank_idx + 1 :]
        return (
            "Question:\nFill in the blank: " + " ".join(blanked) + ".\n\n"
            f"Reference Answer: {answer_word}"
        )

    def _generate_essay(self, statements: list[str]) -> str:
        reference = " ".join(statements[:2])
        return (
            "Question:\nDiscuss what the described practices suggest about everyday "
            "social life, drawing on all the points provided.\n\n"
            f"Reference Answer: {reference}"
        )

    # -- candidate answering -------------------------------------------------

    def _answer(self, prompt: str) -> str:
        reference = _between(prompt, "Reference:", "Question:").strip()
        question = _between(prompt, "Question:", "Answer with")
        if not question:
            question = prompt
        option_lines = re.findall(r"^([A-F])\)\s*(.+)$", prompt, flags=re.MULTILINE)
        if "Answer with the letter" in prompt and option_lines:
            if reference:
                ref_norm = normalize_text(reference)
                for letter, text in option_lines:
                    if normalize_text(text) and normalize_text(text) in ref_norm:
                        return letter
            idx = int(digest(normalize_text(question)), 16) % len(option_lines)
            return option_lines[idx][0]
        if "Answer with True or False" in prompt:
            stem = re.sub(r"(?i).*true or false:\s*", "", question).strip()
            if reference:
                ref_norm = normalize_text(reference)
                if normalize_text(stem) and normalize_text(stem) in ref_norm:
                    return "True"
                stripped = normalize_text(strip_negations(stem))
                if has_negation(stem) and stripped and stripped in ref_norm:
                    return "False"
            return "True" if int(digest(normalize_text(stem)), 16) % 2 == 0 else "False"
        if reference:
            first = [line for line in reference.splitlines() if line.strip()]
            if first:
                return re.sub(r"^[-\d.\s]+", "", first[0]).strip()
        return "I am not certain without more context."


class ScriptedJudge:
    """Deterministic judge double encoding the consistency and conflict rules.

    Identical verdict logic to :class:`MockChatProvider` but refuses any
    prompt that is not a QC or grading prompt, which keeps tests honest about
    which calls reach the judge.
    """

    provider_id = "mock:judge"

    def __init__(self, call_log: CallLog | None = None):
        self._call_log = call_log

    def chat(self, request: ChatRequest) -> ChatResponse:
        prompt = request.user_text
        if "VERDICT: REJECTED(UNANSWERABLE)" in prompt:
            question = _field(prompt, "Question:", ["Provided answer:"])
            answer = _field(prompt, "Provided answer:", ["Reference knowledge:"])
            knowledge = _field(prompt, "Reference knowledge:", ["Answer on the first line"])
            text = qc_verdict(question, answer, knowledge)
        elif "VERDICT: CORRECT" in prompt:
            reference = _field(prompt, "Reference answer:", ["Model answer:"])
            test = _field(prompt, "Model answer:", ["Answer on the first line"])
            text = judge_verdict(reference, test)
        else:
            raise PreconditionError("ScriptedJudge only grades QC and judge prompts")
        if self._call_log is not None:
            self._call_log.record(self.provider_id, prompt, 0.0, "ok")
        return ChatResponse(text=text, provider_id=self.provider_id, token_counts=(len(prompt) // 4, len(text) // 4))


class ScriptedKnowledgeModel:
    """Candidate-model double that answers correctly iff its gold knowledge is in-prompt.

    Built from (question_text, gold statements, correct answer, wrong answer)
    tuples; used to audit knowledge-injection behavior.
    """

    provider_id = "mock:scripted-model"

    def __init__(self, rules: Sequence[tuple[str, Sequence[str], str, str]], call_log: CallLog | None = None):
        self._rules = [(q, tuple(g), c, w) for q, g, c, w in rules]
        self._call_log = call_log

    def chat(self, request: ChatRequest) -> ChatResponse:
        prompt_norm = normalize_text(request.user_text)
        text = "I do not know."
        for question, gold, correct, wrong in self._rules:
            if normalize_text(question) in prompt_norm:
                if all(normalize_text(g) in prompt_norm for g in gold):
                    text = correct
                else:
                    text = wrong
                break
        if self._call_log is not None:
            self._call_log.record(self.provider_id, request.user_text, 0.0, "ok")
        return ChatResponse(text=text, provider_id=self.provider_id, token_counts=(0, 0))
