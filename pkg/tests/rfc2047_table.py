"""Encoded-word decoding table: (header text, expected decoded text).

Expected values were worked out by hand from the byte tables of UTF-8 and
ISO-8859-1; the cases cover B and Q forms in both charsets, adjacency and
whitespace rules, case-insensitive markers and malformed words.
"""

CASES = [
    # UTF-8, B
    ("=?UTF-8?B?w6k=?=", "é"),
    ("=?UTF-8?B?w6k?=", "é"),
    ("=?UTF-8?B?Y2Fmw6k=?=", "café"),
    ("=?UTF-8?B?Sm9zw6kgR2FyY8OtYQ==?=", "José García"),
    ("=?UTF-8?B?UmV1bmnDo28gZGUgZXF1aXBl?=", "Reunião de equipe"),
    ("=?UTF-8?B?cmVsYXTDs3Jpby5wZGY=?=", "relatório.pdf"),
    ("=?UTF-8?B?cmVsYXTDs3Jpby5wZGY?=", "relatório.pdf"),
    ("=?UTF-8?B?U3RyYcOfZQ==?=", "Straße"),
    ("=?UTF-8?B?R3LDvMOfZSBhdXMgS8O2bG4=?=", "Grüße aus Köln"),
    ("=?UTF-8?B?QcOnw6Nv?=", "Ação"),
    ("=?UTF-8?B?4oKsIDEwMA==?=", "€ 100"),
    ("=?utf-8?b?WsO8cmljaA==?=", "Zürich"),
    # UTF-8, Q
    ("=?UTF-8?Q?=C3=A9?=", "é"),
    ("=?UTF-8?Q?caf=C3=A9?=", "café"),
    ("=?UTF-8?Q?Jos=C3=A9_Garc=C3=ADa?=", "José García"),
    ("=?UTF-8?Q?Reuni=C3=A3o_de_equipe?=", "Reunião de equipe"),
    ("=?UTF-8?Q?relat=C3=B3rio=2Epdf?=", "relatório.pdf"),
    ("=?UTF-8?Q?na=C3=AFve?=", "naïve"),
    ("=?UTF-8?Q?=C3=87a_va=3F?=", "Ça va?"),
    ("=?UTF-8?Q?cr=C3=A8me_br=C3=BBl=C3=A9e?=", "crème brûlée"),
    ("=?UTF-8?Q?=E2=82=AC_100?=", "€ 100"),
    ("=?utf-8?q?a=c3=b1o?=", "año"),
    # ISO-8859-1, B
    ("=?ISO-8859-1?B?6Q==?=", "é"),
    ("=?ISO-8859-1?B?Y2Fm6Q==?=", "café"),
    ("=?ISO-8859-1?B?Sm9z6SBHYXJj7WE=?=", "José García"),
    ("=?ISO-8859-1?B?U3RyYd9l?=", "Straße"),
    ("=?ISO-8859-1?B?x2EgdmE/?=", "Ça va?"),
    ("=?ISO-8859-1?B?Qefjbw==?=", "Ação"),
    ("=?iso-8859-1?b?ZmHnYWRl?=", "façade"),
    ("=?ISO-8859-1?B?R3L832UgYXVzIEv2bG4=?=", "Grüße aus Köln"),
    # ISO-8859-1, Q
    ("=?ISO-8859-1?Q?caf=E9?=", "café"),
    ("=?ISO-8859-1?Q?Jos=E9_Garc=EDa?=", "José García"),
    ("=?ISO-8859-1?Q?Reuni=E3o_de_equipe?=", "Reunião de equipe"),
    ("=?ISO-8859-1?Q?relat=F3rio=2Epdf?=", "relatório.pdf"),
    ("=?ISO-8859-1?Q?na=EFve?=", "naïve"),
    ("=?ISO-8859-1?Q?cr=E8me_br=FBl=E9e?=", "crème brûlée"),
    ("=?ISO-8859-1?Q?Z=FCrich?=", "Zürich"),
    ("=?latin1?q?a=f1o?=", "año"),
    # adjacency and surrounding text
    ("=?UTF-8?Q?Jos=C3=A9?= =?UTF-8?Q?_Garc=C3=ADa?=", "José García"),
    ("=?UTF-8?B?UmV1bmnDo28=?=\r\n =?UTF-8?Q?_de_equipe?=", "Reunião de equipe"),
    ("=?ISO-8859-1?Q?caf=E9?=  =?UTF-8?B?w6k=?=", "caféé"),
    ("Re: =?UTF-8?Q?caf=C3=A9?= today", "Re: café today"),
    ("=?UTF-8?Q?Jos=C3=A9_Garc=C3=ADa?= <jgarcia@ksu.edu>", "José García <jgarcia@ksu.edu>"),
    ("Fwd: =?ISO-8859-1?Q?Stra=DFe?= and =?UTF-8?B?WsO8cmljaA==?=", "Fwd: Straße and Zürich"),
    # identity and malformed input
    ("plain name", "plain name"),
    ("", ""),
    ("=?UTF-8?B?!!!?=", "=?UTF-8?B?!!!?="),
    ("=?UTF-8?X?abc?=", "=?UTF-8?X?abc?="),
    ("=?UTF-8?Q?unterminated", "=?UTF-8?Q?unterminated"),
    ("100% =?UTF-8?Q?s=C3=BCre?=", "100% süre"),
]

assert len(CASES) == 50
