#!/usr/bin/env python3
"""Serves Hugging Face checkpoints over the JSON protocol the C++ HTTP backend speaks.

    POST /classify {"model", "pairs": [{"premise", "hypothesis", "joined"}]} -> {"probs": [[e, c, n], ...]}
    POST /extract  {"model", "question", "context"} -> {"start", "end", "score"}   (UTF-8 byte offsets)
    POST /embed    {"model", "texts": [...]} -> {"vectors": [[...], ...]}

Models are loaded on first use and kept in memory. Run with
    python3 tools/nli_server.py --port 8765
"""

import argparse
import functools
import threading

import torch
import uvicorn
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel
from transformers import AutoModelForSequenceClassification, AutoTokenizer, pipeline

app = FastAPI()
_lock = threading.Lock()
_device = "cuda" if torch.cuda.is_available() else "cpu"


class Pair(BaseModel):
    premise: str
    hypothesis: str
    joined: str = ""


class ClassifyRequest(BaseModel):
    model: str
    pairs: list[Pair]


class ExtractRequest(BaseModel):
    model: str
    question: str
    context: str


class EmbedRequest(BaseModel):
    model: str
    texts: list[str]


@functools.lru_cache(maxsize=4)
def classifier(name):
    tokenizer = AutoTokenizer.from_pretrained(name)
    model = AutoModelForSequenceClassification.from_pretrained(name).to(_device).eval()
    # column of each NLI class in the model's output
    by_name = {label.lower(): int(i) for i, label in model.config.id2label.items()}
    try:
        order = [by_name["entailment"], by_name["contradiction"], by_name["neutral"]]
    except KeyError as e:
        raise RuntimeError(f"{name}: cannot map labels {model.config.id2label} onto entailment/contradiction/neutral") from e
    return tokenizer, model, order


@functools.lru_cache(maxsize=2)
def extractor(name):
    return pipeline("question-answering", model=name, device=0 if _device == "cuda" else -1)


@functools.lru_cache(maxsize=2)
def embedder(name):
    from sentence_transformers import SentenceTransformer

    return SentenceTransformer(name, device=_device)


@app.post("/classify")
def classify(req: ClassifyRequest):
    with _lock:
        try:
            tokenizer, model, order = classifier(req.model)
        except Exception as e:
            raise HTTPException(status_code=500, detail=str(e))
        batch = tokenizer(
            [p.premise for p in req.pairs],
            [p.hypothesis for p in req.pairs],
            truncation="only_first",
            padding=True,
            return_tensors="pt",
        ).to(_device)
        with torch.no_grad():
            probs = torch.softmax(model(**batch).logits.double(), dim=-1)
    return {"probs": probs[:, order].tolist()}


@app.post("/extract")
def extract(req: ExtractRequest):
    with _lock:
        answer = extractor(req.model)(question=req.question, context=req.context)
    start = len(req.context[: answer["start"]].encode("utf-8"))
    end = len(req.context[: answer["end"]].encode("utf-8"))
    return {"start": start, "end": end, "score": float(answer["score"])}


@app.post("/embed")
def embed(req: EmbedRequest):
    with _lock:
        vectors = embedder(req.model).encode(req.texts)
    return {"vectors": [[float(x) for x in v] for v in vectors]}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8765)
    args = parser.parse_args()
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
