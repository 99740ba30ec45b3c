#!/usr/bin/env python3
"""Generate the golden table for math answer extraction + grading.

Independent oracle: implements the documented extraction ladder and
normalization rules directly on top of fractions.Fraction, with no code
shared with the Rust implementation. Output is frozen into
crates/cli/tests/data/golden_math.json and asserted 1:1 by the
acceptance suite.
"""

import json
import re
import sys
from fractions import Fraction

NUMBER_RE = re.compile(r"[+-]?(?:\d[\d,]*(?:\.\d+)?|\.\d+)(?:/\d+)?%?")


def extract_math(raw):
    """Returns (rule, payload) or (None, None). First matching rule wins."""
    # Rule 1: content of the first <answer>...</answer> pair.
    start = raw.find("<answer>")
    if start != -1:
        end = raw.find("</answer>", start + len("<answer>"))
        if end != -1:
            return "answer_tag", raw[start + len("<answer>"):end]
    # Rule 2: content of the last balanced \boxed{...}.
    boxed = last_balanced_boxed(raw)
    if boxed is not None:
        return "boxed", boxed
    # Rule 3: everything after the last #### marker.
    pos = raw.rfind("####")
    if pos != -1:
        return "hash_marker", raw[pos + 4:]
    # Rule 4: the last numeric literal anywhere in the text.
    matches = NUMBER_RE.findall(raw)
    if matches:
        return "last_number", matches[-1]
    return None, None


def last_balanced_boxed(text):
    best = None
    idx = 0
    while True:
        pos = text.find("\\boxed{", idx)
        if pos == -1:
            return best
        inner_start = pos + len("\\boxed{")
        depth = 1
        for i in range(inner_start, len(text)):
            c = text[i]
            if c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    best = text[inner_start:i]
                    break
        idx = pos + 1


def normalize(payload):
    """Returns (Fraction, canonical_str) or raises ValueError(residue)."""
    s = payload
    # N1: iteratively strip wrappers until a fixed point.
    while True:
        before = s
        s = s.strip()
        if s.startswith("<answer>") and s.endswith("</answer>") and len(s) >= 17:
            s = s[len("<answer>"):-len("</answer>")]
        if s.startswith("\\boxed{") and s.endswith("}"):
            inner = s[len("\\boxed{"):-1]
            if balanced(inner):
                s = inner
        if s.startswith("$"):
            s = s[1:]
        if s.endswith("$"):
            s = s[:-1]
        if s.endswith("."):
            s = s[:-1]
        if s == before:
            break
    # N2: drop commas between digit groups.
    out = []
    for i, c in enumerate(s):
        if c == "," and i > 0 and i + 1 < len(s) and s[i - 1].isdigit() and s[i + 1].isdigit():
            continue
        out.append(c)
    s = "".join(out)
    # N3: strip a leading +, then leading zeros (keeping a lone 0).
    if s.startswith("+"):
        s = s[1:]
    neg = s.startswith("-")
    body = s[1:] if neg else s
    while body.startswith("0") and len(body) > 1 and body[1].isdigit():
        body = body[1:]
    s = ("-" + body) if neg else body
    residue = s
    # N4/N5: parse as integer, finite decimal, or fraction; % divides by 100.
    percent = s.endswith("%")
    if percent:
        s = s[:-1]
    try:
        value = parse_number(s)
    except ValueError:
        raise ValueError(residue)
    if percent:
        value = value / 100
    return value, render(value)


def balanced(text):
    depth = 0
    for c in text:
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


def parse_number(s):
    if re.fullmatch(r"[+-]?\d+", s):
        return Fraction(int(s))
    if re.fullmatch(r"[+-]?(?:\d+)?\.\d+", s):
        return Fraction(s)
    m = re.fullmatch(r"([+-]?\d+)/([+-]?\d+)", s)
    if m:
        den = int(m.group(2))
        if den == 0:
            raise ValueError(s)
        return Fraction(int(m.group(1)), den)
    raise ValueError(s)


def render(value):
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def grade(raw, gold_str, convention):
    """Returns (status, rule, extracted)."""
    rule, payload = extract_math(raw)
    if rule is None:
        return "format_error", None, None
    try:
        value, canonical = normalize(payload)
    except ValueError:
        return "format_error", rule, None
    if convention == "aime_integer":
        if value.denominator != 1 or not (0 <= value <= 999):
            return "format_error", rule, canonical
    gold = parse_number(gold_str)
    status = "pass" if value == gold else "fail"
    return status, rule, canonical


CASES = [
    # (raw candidate, gold, convention)
    # boxed forms
    (r"The answer is \boxed{42}.", "42", "gsm8k_numeric"),
    (r"\boxed{042}", "42", "gsm8k_numeric"),
    (r" \boxed{042} ", "42", "aime_integer"),
    (r"so \boxed{1,005}", "1005", "gsm8k_numeric"),
    (r"\boxed{\frac{1}{2}}", "1/2", "gsm8k_numeric"),
    (r"first \boxed{10} then \boxed{20}", "20", "gsm8k_numeric"),
    (r"\boxed{-12}", "-12", "gsm8k_numeric"),
    (r"\boxed{ 7 }", "7", "aime_integer"),
    (r"\boxed{3.50}", "7/2", "gsm8k_numeric"),
    (r"\boxed{42", "42", "gsm8k_numeric"),  # unbalanced: falls to last_number
    # answer tags
    ("<answer>\\boxed{042}</answer>", "42", "gsm8k_numeric"),
    ("<answer> 72 </answer>", "72", "gsm8k_numeric"),
    ("<answer>72</answer><answer>99</answer>", "72", "gsm8k_numeric"),
    ("<answer>4</answer> but really \\boxed{5}", "4", "gsm8k_numeric"),
    ("<answer></answer>", "1", "gsm8k_numeric"),
    ("<answer> 812 </answer>", "812", "aime_integer"),
    ("<answer>$1,234</answer>", "1234", "gsm8k_numeric"),
    ("text <answer>0.125</answer> trailing", "1/8", "gsm8k_numeric"),
    ("<answer>x = 9</answer>", "9", "gsm8k_numeric"),
    ("<answer>12%</answer>", "3/25", "gsm8k_numeric"),
    # hash markers
    ("The result is #### 72", "72", "gsm8k_numeric"),
    ("#### 10\njunk #### 72", "72", "gsm8k_numeric"),
    ("steps...\n#### 1,005", "1005", "gsm8k_numeric"),
    ("#### 72 apples", "72", "gsm8k_numeric"),
    ("#### -3", "-3", "gsm8k_numeric"),
    ("####042", "42", "gsm8k_numeric"),
    ("#### $460.", "460", "gsm8k_numeric"),
    ("#### 0.5", "1/2", "gsm8k_numeric"),
    # last numeric literal
    ("So we have 10 + 20 = 30", "30", "gsm8k_numeric"),
    ("the answer is 4 dollars", "4", "gsm8k_numeric"),
    ("no numbers at all", "1", "gsm8k_numeric"),
    ("about 3.14159 roughly", "3.14159", "gsm8k_numeric"),
    ("values 1, 2, and 3", "3", "gsm8k_numeric"),
    ("half means 1/2 of it", "1/2", "gsm8k_numeric"),
    ("grew by 150%", "3/2", "gsm8k_numeric"),
    ("it is -40 degrees", "-40", "gsm8k_numeric"),
    # commas and currency
    ("<answer>1,005</answer>", "1005", "gsm8k_numeric"),
    ("<answer>12,345,678</answer>", "12345678", "gsm8k_numeric"),
    ("<answer>$64</answer>", "64", "gsm8k_numeric"),
    ("<answer>1,2</answer>", "12", "gsm8k_numeric"),
    # fractions and decimals, exact equality
    ("<answer>0.5</answer>", "1/2", "gsm8k_numeric"),
    ("<answer>1/2</answer>", "0.5", "gsm8k_numeric"),
    ("<answer>2/4</answer>", "1/2", "gsm8k_numeric"),
    ("<answer>0.3333</answer>", "1/3", "gsm8k_numeric"),
    ("<answer>7/3</answer>", "7/3", "gsm8k_numeric"),
    ("<answer>-1/2</answer>", "-0.5", "gsm8k_numeric"),
    ("<answer>5/0</answer>", "1", "gsm8k_numeric"),
    ("<answer>.5</answer>", "1/2", "gsm8k_numeric"),
    ("<answer>+42</answer>", "42", "gsm8k_numeric"),
    ("<answer>007</answer>", "7", "gsm8k_numeric"),
    ("<answer>000</answer>", "0", "gsm8k_numeric"),
    # percents
    ("<answer>50%</answer>", "1/2", "gsm8k_numeric"),
    ("<answer>12.5%</answer>", "1/8", "gsm8k_numeric"),
    ("<answer>1,200%</answer>", "12", "gsm8k_numeric"),
    # AIME convention violations and boundaries
    ("<answer>1005</answer>", "5", "aime_integer"),
    ("<answer>42.5</answer>", "42", "aime_integer"),
    ("<answer>-1</answer>", "1", "aime_integer"),
    ("<answer>999</answer>", "999", "aime_integer"),
    ("<answer>0</answer>", "0", "aime_integer"),
    ("<answer>2\\sqrt{2}</answer>", "2", "aime_integer"),
]


def main():
    assert len(CASES) == 60, f"expected 60 cases, have {len(CASES)}"
    rows = []
    for raw, gold, convention in CASES:
        status, rule, extracted = grade(raw, gold, convention)
        rows.append({
            "raw": raw,
            "gold": gold,
            "convention": convention,
            "status": status,
            "rule": rule,
            "extracted": extracted,
        })
    counts = {}
    for r in rows:
        counts[r["status"]] = counts.get(r["status"], 0) + 1
    print(f"statuses: {counts}", file=sys.stderr)
    json.dump(rows, sys.stdout, indent=1)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
