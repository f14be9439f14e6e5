"""Seeded synthetic retrieval corpus for exercising the full pipeline offline.

Vocabulary layout (|V| = 1000):
  [0, 50)      function words, sprinkled through passages and queries
  [50, 250)    topic words, 20 per topic, 10 topics
  [250, 310)   concept words; the default corpus uses the first 8
  [310, 370)   query-side synonyms, synonym(c) = c + 60
  [370, 670)   rare words, 3 owned by each passage
  [670, 1000)  never used by the text, still available as expansion dimensions

Passages contain concept words; queries name the same concepts only through
their synonyms, so an untrained encoder has almost no lexical overlap to go
on. Held-out queries reuse synonyms seen in training, which makes learning
the synonym -> concept expansion pay off on the eval split. Explicit
negatives are same-topic passages, standing in for precomputed lexical-match
negatives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluation import write_qrels
from .encoder import EncoderParams
from .trainer import TrainConfig, TrainingTriple, steps_per_epoch, ablation_configs, write_triples

VOCAB_SIZE = 1000
N_FUNCTION = 50
N_TOPICS = 10
TOPIC_WORDS = 20
CONCEPT_START = N_FUNCTION + N_TOPICS * TOPIC_WORDS
N_CONCEPTS = 60
SYNONYM_START = CONCEPT_START + N_CONCEPTS
RARE_START = SYNONYM_START + N_CONCEPTS
RARE_PER_DOC = 3


@dataclass(frozen=True)
class DemoRecipe:
    """Encoder init and training settings used for the bundled demo runs."""

    hidden: int = 32
    param_seed: int = 0
    projection_bias: float = -0.1
    k: int = 16
    optimizer: str = "adamw"
    learning_rate: float = 3e-3
    epochs: int = 20
    batch_size: int = 8
    r_decay: float = 0.2
    lambda_kl: float = 1.0

    def init_params(self, vocab_size: int = VOCAB_SIZE) -> EncoderParams:
        return EncoderParams.init(vocab_size, self.hidden, self.param_seed, projection_bias=self.projection_bias)

    def configs(self, n_triples: int) -> dict[str, TrainConfig]:
        base = TrainConfig(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            seed=self.param_seed,
            optimizer=self.optimizer,
        )
        spe = steps_per_epoch(n_triples, self.batch_size)
        return ablation_configs(base, self.k, spe, r_decay=self.r_decay, lambda_kl=self.lambda_kl)


@dataclass
class DemoCorpus:
    passages: dict[str, list[int]]
    train_queries: dict[str, list[int]]
    eval_queries: dict[str, list[int]]
    train_qrels: dict[tuple[str, str], int]
    eval_qrels: dict[tuple[str, str], int]
    triples: list[TrainingTriple]
    vocab_size: int = VOCAB_SIZE


def synonym(concept: int) -> int:
    return concept + N_CONCEPTS


def make_demo_corpus(
    seed: int = 13,
    n_passages: int = 100,
    n_train: int = 20,
    n_eval: int = 20,
    negatives_per_query: int = 2,
    passage_function_words: int = 6,
    query_function_words: int = 1,
    concepts_per_passage: int = 3,
    query_synonyms: int = 3,
    query_rare: int = 0,
    query_topic_words: int = 0,
    n_concepts: int = 8,
    rare_per_passage: int = RARE_PER_DOC,
) -> DemoCorpus:
    if n_train + n_eval > n_passages:
        raise ValueError("need at least one passage per query")
    if RARE_START + rare_per_passage * n_passages > VOCAB_SIZE:
        raise ValueError("not enough rare words for that many passages")
    rng = np.random.default_rng(seed)
    topic_of, concepts_of, rare_of, topic_words_of = [], [], [], []
    passages: dict[str, list[int]] = {}
    for i in range(n_passages):
        t = i % N_TOPICS
        topic_pool = np.arange(N_FUNCTION + t * TOPIC_WORDS, N_FUNCTION + (t + 1) * TOPIC_WORDS)
        topic_words = rng.choice(topic_pool, size=6, replace=False)
        concepts = CONCEPT_START + rng.choice(n_concepts, size=concepts_per_passage, replace=False)
        rare = np.arange(RARE_START + rare_per_passage * i, RARE_START + rare_per_passage * (i + 1))
        function = rng.integers(0, N_FUNCTION, size=passage_function_words)
        tokens = np.concatenate([topic_words, concepts, rare, function])
        rng.shuffle(tokens)
        passages[f"d{i}"] = tokens.tolist()
        topic_of.append(t)
        concepts_of.append(concepts)
        rare_of.append(rare)
        topic_words_of.append(topic_words)

    def query_for(doc: int, concepts) -> list[int]:
        q = np.concatenate(
            [
                [synonym(int(c)) for c in concepts],
                rng.choice(rare_of[doc], size=query_rare, replace=False),
                rng.choice(topic_words_of[doc], size=query_topic_words, replace=False),
                rng.integers(0, N_FUNCTION, size=query_function_words),
            ]
        ).astype(np.int64)
        rng.shuffle(q)
        return q.tolist()

    order = rng.permutation(n_passages).tolist()
    train_queries, eval_queries = {}, {}
    train_qrels, eval_qrels = {}, {}
    triples = []
    seen_concepts: set[int] = set()
    for n, doc in enumerate(order[:n_train]):
        concepts = rng.choice(concepts_of[doc], size=query_synonyms, replace=False)
        seen_concepts.update(int(c) for c in concepts)
        qtokens = query_for(doc, concepts)
        qid = f"tq{n}"
        train_queries[qid] = qtokens
        train_qrels[(qid, f"d{doc}")] = 1
        same_topic = [j for j in range(n_passages) if topic_of[j] == topic_of[doc] and j != doc]
        negs = rng.choice(same_topic, size=negatives_per_query, replace=False).tolist()
        triples.append(TrainingTriple(qtokens, passages[f"d{doc}"], tuple(passages[f"d{j}"] for j in negs)))

    # Held-out targets are unused passages; their synonyms must have been seen in training.
    eligible = [
        d for d in order[n_train:] if sum(int(c) in seen_concepts for c in concepts_of[d]) >= query_synonyms
    ]
    if len(eligible) < n_eval:
        raise ValueError("not enough held-out passages share trained concepts; try another seed")
    for n, doc in enumerate(eligible[:n_eval]):
        known = [int(c) for c in concepts_of[doc] if int(c) in seen_concepts]
        concepts = rng.choice(known, size=query_synonyms, replace=False)
        qid = f"eq{n}"
        eval_queries[qid] = query_for(doc, concepts)
        eval_qrels[(qid, f"d{doc}")] = 1
    return DemoCorpus(passages, train_queries, eval_queries, train_qrels, eval_qrels, triples)


def write_token_file(path: str | Path, items: dict[str, list[int]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for key, tokens in items.items():
            f.write(json.dumps({"id": key, "tokens": tokens}, separators=(",", ":")) + "\n")


def read_token_file(path: str | Path) -> list[tuple[str, list[int]]]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append((str(obj["id"]), [int(t) for t in obj["tokens"]]))
            except (ValueError, KeyError, TypeError) as e:
                raise ValueError(f"{path}:{lineno}: bad token line ({e})") from e
    return out


def write_demo(directory: str | Path, corpus: DemoCorpus | None = None) -> Path:
    """Write corpus, queries, qrels and triples files into ``directory``."""
    corpus = corpus or make_demo_corpus()
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_token_file(d / "corpus.jsonl", corpus.passages)
    write_token_file(d / "train_queries.jsonl", corpus.train_queries)
    write_token_file(d / "eval_queries.jsonl", corpus.eval_queries)
    write_qrels(d / "train_qrels.txt", corpus.train_qrels)
    write_qrels(d / "eval_qrels.txt", corpus.eval_qrels)
    write_triples(d / "triples.jsonl", corpus.triples)
    return d
