# Acceptance criteria record their outcome here; the summary hook prints them.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
CRITERIA = {
    1: "synthetic flow: Top-k and SepTop-k test accuracy >= 0.95",
    2: "learned pooling >= random pooling",
    3: "SepTop-k at r=0.3 within 10 points of r=0.7",
    4: "bundled TU corpus oracle and end-to-end smoke run",
    5: "algebraic invariants",
    6: "gradients match central differences",
    7: "pooling selection oracles",
    8: "permutation invariance of logits",
}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        ok, detail = ACCEPTANCE.get(n, (False, "not run"))
        terminalreporter.write_line(f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
