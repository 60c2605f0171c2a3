UID = "uid"
SEQUENCE = "seq"


class MessageId(int):
    """A message identifier that remembers whether it is a UID or a
    sequence number.  Compares and hashes like the plain integer."""

    kind: str

    def __new__(cls, value, kind=UID):
        if kind not in (UID, SEQUENCE):
            raise ValueError(f"unknown id kind {kind!r}")
        self = super().__new__(cls, value)
        if self < 1:
            raise ValueError("message ids start at 1")
        self.kind = kind
        return self

    def __repr__(self):
        return f"MessageId({int(self)}, {self.kind!r})"


def as_ids(values, kind=UID):
    """Coerce integers (or MessageIds) into a list of MessageId of one kind."""
    out = []
    for v in values:
        if isinstance(v, MessageId):
            if v.kind != kind:
                raise ValueError("cannot mix UIDs and sequence numbers")
            out.append(v)
        else:
            out.append(MessageId(int(v), kind))
    return out
