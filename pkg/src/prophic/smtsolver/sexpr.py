"""S-expression tokenizer/reader for the SMT-LIB wire format."""


class SexprError(Exception):
    pass


def tokenize(text):
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            yield c
            i += 1
        elif c == '"':
            j = i + 1
            while j < n:
                if text[j] == '"':
                    if j + 1 < n and text[j + 1] == '"':
                        j += 2
                        continue
                    break
                j += 1
            if j >= n:
                raise SexprError("unterminated string literal")
            yield text[i:j + 1]
            i = j + 1
        elif c == "|":
            j = text.find("|", i + 1)
            if j < 0:
                raise SexprError("unterminated quoted symbol")
            yield text[i:j + 1]
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in " \t\r\n();\"|":
                j += 1
            yield text[i:j]
            i = j


def parse_all(text):
    """Parse every toplevel s-expression in text."""
    out = []
    stack = []
    for tok in tokenize(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack:
                raise SexprError("unbalanced ')'")
            done = stack.pop()
            if stack:
                stack[-1].append(done)
            else:
                out.append(done)
        else:
            atom = tok[1:-1] if tok.startswith("|") else tok
            if stack:
                stack[-1].append(atom)
            else:
                out.append(atom)
    if stack:
        raise SexprError("unbalanced '('")
    return out


class StreamReader:
    """Incremental reader: feed text, pop complete toplevel expressions."""

    def __init__(self):
        self._buf = ""

    def feed(self, chunk):
        self._buf += chunk

    def ready(self):
        """Return complete toplevel sexprs, keeping any trailing partial."""
        depth = 0
        in_str = in_sym = False
        last_complete = 0
        i = 0
        buf = self._buf
        n = len(buf)
        out = []
        while i < n:
            c = buf[i]
            if in_str:
                if c == '"':
                    in_str = False
                i += 1
                continue
            if in_sym:
                if c == "|":
                    in_sym = False
                i += 1
                continue
            if c == '"':
                in_str = True
            elif c == "|":
                in_sym = True
            elif c == ";":
                while i < n and buf[i] != "\n":
                    i += 1
                continue
            elif c == "(":
                depth += 1
            elif c == ")":
                depth -= 1
                if depth < 0:
                    raise SexprError("unbalanced ')'")
                if depth == 0:
                    out.extend(parse_all(buf[last_complete:i + 1]))
                    last_complete = i + 1
            elif depth == 0 and c not in " \t\r\n":
                # bare atom at toplevel: scan it
                j = i
                while j < n and buf[j] not in " \t\r\n();":
                    j += 1
                if j < n:
                    out.append(buf[i:j])
                    last_complete = j
                    i = j
                    continue
                break
            i += 1
        self._buf = buf[last_complete:]
        return out


def to_str(e):
    if isinstance(e, str):
        return e
    return "(" + " ".join(to_str(x) for x in e) + ")"
