#!/usr/bin/env python3
"""Regenerates data/fixtures from the problem table below.

Expected outputs come from running each reference solution. Every wrong
solution must pass at least one case and fail at least one; every wrong edit
must fail all of them. The script refuses to write anything otherwise.
"""
import json
import pathlib
import subprocess
import sys

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "fixtures"

PROBLEMS = [
    {
        "problem_id": "add-two",
        "description": "Read two integers a and b and print their sum.",
        "input_format": "One line with two integers a and b.",
        "output_format": "A single integer.",
        "difficulty": 1,
        "reference": "a, b = map(int, input().split())\nprint(a + b)\n",
        "inputs": ["1 2\n", "0 0\n", "2 2\n", "5 0\n", "-3 7\n", "10 20\n"],
        "traces": [
            ["a, b = map(int, input().split())\nprint(a * b)\n",
             "a, b = map(int, input().split())\nprint(a - b)\n"],
            ["a, b = map(int, input().split())\nprint(max(a, b) * 2)\n"],
        ],
        "wrong_edit": "a, b = map(int, input().split())\nprint(a + b + 1)\n",
        "hint": "the operator combining a and b",
    },
    {
        "problem_id": "list-max",
        "description": "Given n integers, print the largest one.",
        "input_format": "First line n, second line n integers.",
        "output_format": "A single integer.",
        "difficulty": 2,
        "reference": "n = int(input())\nxs = list(map(int, input().split()))\nprint(max(xs))\n",
        "inputs": ["3\n1 5 2\n", "4\n-4 -2 -9 -3\n", "1\n7\n", "5\n9 1 1 1 1\n",
                   "3\n2 2 2\n", "4\n-1 0 -5 3\n"],
        "traces": [
            ["n = int(input())\nxs = list(map(int, input().split()))\nbest = 0\n"
             "for x in xs:\n    if x > best:\n        best = x\nprint(best)\n",
             "n = int(input())\nxs = list(map(int, input().split()))\nprint(xs[0])\n"],
            ["n = int(input())\nxs = list(map(int, input().split()))\nprint(min(xs))\n"],
        ],
        "wrong_edit": "n = int(input())\nxs = list(map(int, input().split()))\nprint(max(xs) - 1)\n",
        "hint": "how the running maximum is initialised",
    },
    {
        "problem_id": "reverse-word",
        "description": "Print the given word reversed.",
        "input_format": "One line holding a lowercase word.",
        "output_format": "The reversed word.",
        "difficulty": 1,
        "reference": "s = input().strip()\nprint(s[::-1])\n",
        "inputs": ["abc\n", "level\n", "a\n", "hello\n", "noon\n", "python\n"],
        "traces": [
            ["s = input().strip()\nprint(s)\n",
             "s = input().strip()\nprint(s[-1] + s[1:-1] + s[0] if len(s) > 1 else s)\n"],
            ["s = input().strip()\nprint(''.join(sorted(s)))\n"],
        ],
        "wrong_edit": "s = input().strip()\nprint(s[::-1].upper())\n",
        "hint": "the order of the characters",
    },
    {
        "problem_id": "count-vowels",
        "description": "Count the vowels (a, e, i, o, u) in a lowercase line.",
        "input_format": "One line of lowercase letters and spaces.",
        "output_format": "A single integer.",
        "difficulty": 2,
        "reference": "s = input()\nprint(sum(1 for c in s if c in 'aeiou'))\n",
        "inputs": ["hello world\n", "sky\n", "queue\n", "aeiou\n", "rhythm and blues\n",
                   "banana\n"],
        "traces": [
            ["s = input()\nprint(sum(1 for c in s if c in 'aeio'))\n",
             "s = input()\nprint(len(set(c for c in s if c in 'aeiou')))\n"],
            ["s = input()\nprint(sum(1 for c in s.split() if c[0] in 'aeiou'))\n"],
        ],
        "wrong_edit": "s = input()\nprint(sum(1 for c in s if c in 'aeiou') + 1)\n",
        "hint": "which letters are counted",
    },
    {
        "problem_id": "factorial",
        "description": "Print n! for 0 <= n <= 12.",
        "input_format": "One integer n.",
        "output_format": "A single integer.",
        "difficulty": 2,
        "reference": "n = int(input())\nr = 1\nfor i in range(2, n + 1):\n    r *= i\nprint(r)\n",
        "inputs": ["0\n", "1\n", "2\n", "5\n", "10\n", "12\n"],
        "traces": [
            ["n = int(input())\nr = 1\nfor i in range(1, n):\n    r *= i\nprint(r)\n",
             "n = int(input())\nr = 0\nfor i in range(1, n + 1):\n    r += i\nprint(r)\n"],
            ["n = int(input())\nprint(n * (n - 1) if n > 1 else 1)\n"],
        ],
        "wrong_edit": "n = int(input())\nr = 1\nfor i in range(2, n + 1):\n    r *= i\nprint(r * 2)\n",
        "hint": "the bounds of the product loop",
    },
    {
        "problem_id": "is-prime",
        "description": "Print YES if n is prime and NO otherwise.",
        "input_format": "One integer n with 1 <= n <= 10^6.",
        "output_format": "YES or NO.",
        "difficulty": 3,
        "reference": ("n = int(input())\nok = n >= 2\ni = 2\nwhile i * i <= n:\n"
                      "    if n % i == 0:\n        ok = False\n        break\n    i += 1\n"
                      "print('YES' if ok else 'NO')\n"),
        "inputs": ["1\n", "2\n", "9\n", "17\n", "25\n", "997\n", "1000000\n"],
        "traces": [
            ["n = int(input())\nprint('YES' if n % 2 == 1 else 'NO')\n",
             "n = int(input())\nok = True\nfor i in range(2, n):\n    if n % i == 0:\n"
             "        ok = False\nprint('YES' if ok else 'NO')\n"],
            ["n = int(input())\nprint('YES' if n in (2, 3, 5, 7) or n % 6 in (1, 5) else 'NO')\n"],
        ],
        "wrong_edit": ("n = int(input())\nok = n >= 2\ni = 2\nwhile i * i <= n:\n"
                       "    if n % i == 0:\n        ok = False\n        break\n    i += 1\n"
                       "print('NO' if ok else 'YES')\n"),
        "hint": "the handling of small and composite n",
    },
]


def run(code, stdin):
    r = subprocess.run([sys.executable, "-c", code], input=stdin, capture_output=True,
                       text=True, timeout=10)
    return r.returncode, r.stdout


def passes(code, stdin, expected):
    rc, out = run(code, stdin)
    return rc == 0 and out == expected


def main():
    problems, traces, fixtures, feedback = [], [], [], []
    errors = []
    for p in PROBLEMS:
        cases = []
        for i in p["inputs"]:
            rc, out = run(p["reference"], i)
            if rc != 0:
                errors.append(f"{p['problem_id']}: reference fails on {i!r}")
            cases.append({"input": i, "expected_output": out})

        def ratio(code):
            return sum(passes(code, c["input"], c["expected_output"]) for c in cases) / len(cases)

        if ratio(p["wrong_edit"]) != 0.0:
            errors.append(f"{p['problem_id']}: wrong_edit passes a case")
        problems.append({k: p[k] for k in ("problem_id", "description", "input_format",
                                           "output_format", "difficulty")}
                        | {"test_cases": cases, "reference_solution": p["reference"]})
        for t, wrongs in enumerate(p["traces"]):
            subs = [{"code": w, "verdict": "wrong"} for w in wrongs]
            final = p["reference"] if t == 0 else "import sys\n" + p["reference"]
            subs.append({"code": final, "verdict": "correct"})
            traces.append({"problem_id": p["problem_id"], "author_id": f"u{t + 1}",
                           "submissions": subs})
            for w in wrongs:
                r = ratio(w)
                if not 0.0 < r < 1.0:
                    errors.append(f"{p['problem_id']}: wrong solution ratio {r}")
                fixtures.append({"problem_id": p["problem_id"], "wrong_code": w,
                                 "correct_code": p["reference"], "wrong_edit": p["wrong_edit"]})

    for n, f in enumerate(fixtures):
        hint = next(p["hint"] for p in PROBLEMS if p["problem_id"] == f["problem_id"])
        items = [("correct", f"[feedback:correct] The bug is in {hint}; fix it and the output matches."),
                 ("wrong", f"[feedback:wrong] The input parsing looks off; try reading all lines at once.")]
        if n < 4:
            items.append(("wrong", "[feedback:wrong] Print a trailing space after the answer."))
        for polarity, text in items:
            feedback.append({"problem_id": f["problem_id"], "wrong_code": f["wrong_code"],
                             "text": text, "polarity": polarity, "source": "annotated"})

    if errors:
        print("\n".join(errors), file=sys.stderr)
        return 1
    OUT.mkdir(parents=True, exist_ok=True)
    for name, rows in (("problems", problems), ("traces", traces),
                       ("edit_fixtures", fixtures), ("feedback", feedback)):
        with open(OUT / f"{name}.jsonl", "w") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    print(f"{len(problems)} problems, {len(traces)} traces, {len(fixtures)} fixtures, "
          f"{len(feedback)} feedback items")
    return 0


if __name__ == "__main__":
    sys.exit(main())
