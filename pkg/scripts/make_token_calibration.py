"""Freeze reference-tokenizer counts for the estimator calibration test.

Run on a machine where tiktoken is installed; commits the result to
tests/data/token_calibration.json. The heuristic must upper-bound every
sample, so add adversarial texts here rather than loosening the test.
"""

import json
from pathlib import Path

import tiktoken

SAMPLES = [
    "hello world",
    "안녕하세요",
    "오늘 학교에서 재미있는 일이 있었어!",
    "I rode a roller coaster with my family.",
    "don't worry, be happy",
    "숙제를 다 못 해서 속상했어 ㅠㅠ",
    "1234567890 !@#$%",
    "The quick brown fox jumps over the lazy dog.",
]

def main() -> None:
    encoder = tiktoken.get_encoding("cl100k_base")
    samples = [
        {"text": text, "reference_tokens": len(encoder.encode(text))}
        for text in SAMPLES
    ]
    out = Path(__file__).parent.parent / "tests" / "data" / "token_calibration.json"
    out.write_text(
        json.dumps({"encoding": "cl100k_base", "samples": samples}, ensure_ascii=False, indent=2)
        + "\n",
        encoding="utf-8",
    )
    print(f"wrote {out}")

if __name__ == "__main__":
    main()
