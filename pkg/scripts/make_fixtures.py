"""Regenerate the bundled fixture mailbox under src/mailpost/data/fixtures.

Output is deterministic: run it again and the files come out byte-identical.
"""

import io
import json
import os
import random
import struct
import zipfile
import zlib
from email import policy
from email.generator import BytesGenerator
from email.mime.application import MIMEApplication
from email.mime.base import MIMEBase
from email.mime.image import MIMEImage
from email.mime.multipart import MIMEMultipart as _Multipart
from email.mime.text import MIMEText
from email import encoders
from email.charset import QP, Charset

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "mailpost", "data", "fixtures")
POLICY = policy.compat32.clone(linesep="\r\n")
rng = random.Random(2020)


_boundaries = iter(range(1, 1000))


def MIMEMultipart(subtype="mixed"):
    return _Multipart(subtype, boundary=f"=_mailpost_fixture_{next(_boundaries):03d}")


def headers(msg, uid, frm, to, subject, date):
    msg["From"] = frm
    msg["To"] = to
    msg["Subject"] = subject
    msg["Date"] = date
    msg["Message-ID"] = f"<{uid}.fixture@mailpost.test>"
    return msg


def render(msg):
    buf = io.BytesIO()
    BytesGenerator(buf, policy=POLICY).flatten(msg)
    return buf.getvalue()


def tiny_png():
    def chunk(kind, data):
        return struct.pack(">I", len(data)) + kind + data + struct.pack(">I", zlib.crc32(kind + data))
    raw = b"".join(b"\x00" + bytes([(x * 37 + y * 11) % 256 for x in range(8)]) for y in range(8))
    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", struct.pack(">IIBBBBB", 8, 8, 8, 0, 0, 0, 0))
            + chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b""))


def tiny_zip():
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        info = zipfile.ZipInfo("final/report.txt", date_time=(2020, 11, 3, 9, 0, 0))
        zf.writestr(info, "Final project report\n" * 20)
    return buf.getvalue()


SVG = (
    '<svg xmlns="http://www.w3.org/2000/svg" width="120" height="80">\n'
    '  <polyline points="0,80 20,60 40,30 60,20 80,35 100,60 120,78" fill="none" stroke="black"/>\n'
    '  <text x="4" y="12">P(X=x): density</text>\n'
    "</svg>\n"
)
PDF = (
    b"%PDF-1.4\n1 0 obj<</Type/Catalog/Pages 2 0 R>>endobj\n"
    b"2 0 obj<</Type/Pages/Kids[3 0 R]/Count 1>>endobj\n"
    b"3 0 obj<</Type/Page/Parent 2 0 R/MediaBox[0 0 200 200]>>endobj\n"
    b"trailer<</Root 1 0 R>>\n%%EOF\n"
)
APP_R = (
    "library(shiny)\n\nui <- fluidPage(titlePanel(\"Demo\"), plotOutput(\"p\"))\n"
    "server <- function(input, output) {\n  output$p <- renderPlot(hist(rnorm(100)))\n}\n"
    "shinyApp(ui, server)\n"
)

KSU = [
    (60, "Bursar Office <bursar@ksu.edu>", "Payment receipt", "02 Nov 2020 09:15:00 +0000"),
    (145, "Alice Smith <alice.smith@ksu.edu>", "Seminar schedule", "04 Nov 2020 10:00:00 +0000"),
    (147, "Alice Smith <alice.smith@ksu.edu>", "Re: Seminar schedule", "05 Nov 2020 11:30:00 +0000"),
    (159, "Bob Jones <bob.jones@ksu.edu>", "Exam grades posted", "09 Nov 2020 14:00:00 +0000"),
    (332, "=?UTF-8?Q?Jos=C3=A9_Garc=C3=ADa?= <jgarcia@ksu.edu>", "=?UTF-8?B?UmV1bmnDo28gZGUgZXF1aXBl?=",
     "12 Nov 2020 08:45:00 +0000"),
    (333, "Alice Smith <alice.smith@ksu.edu>", "Room change", "16 Nov 2020 09:00:00 +0000"),
    (336, "Bob Jones <bob.jones@ksu.edu>", "Grading rubric", "18 Nov 2020 16:20:00 +0000"),
    (338, "Alice Smith <ALICE.SMITH@ksu.edu>", "Thanks", "20 Nov 2020 12:00:00 +0000"),
    (341, "=?UTF-8?Q?Jos=C3=A9_Garc=C3=ADa?= <jgarcia@ksu.edu>", "Deadline reminder", "24 Nov 2020 17:05:00 +0000"),
    (428, "Bob Jones <bob.jones@ksu.edu>", "Holiday closure", "03 Dec 2020 08:00:00 +0000"),
]

BODIES = [
    "Hello,\nThank you for the great work this week. The meeting is tomorrow.\nBest regards",
    "Unfortunately the exam room is broken, sorry for the problem. We will confirm a new plan soon.",
    "Congratulations on the award! We are pleased and happy to support the team.",
    "Warning: urgent deadline. Late submissions get a penalty; please do not fail to submit.",
    "Please see http://www.example.edu for details. Contact helpdesk@ksu.edu with questions_2020.",
]

INTERNAL = {}
messages = {}
to = "User Name <user@company.com>"

for k, (uid, frm, subj, date) in enumerate(KSU):
    if uid == 60:
        alt = MIMEMultipart("alternative")
        cs = Charset("utf-8")
        cs.body_encoding = QP
        text = MIMEText(
            "Dear student,\n\nYour payment was received.\nReceipt Number: 4815162342\n"
            "Amount: $1,250.00\n"
            "This is a deliberately long line to force a quoted-printable soft line break in the fixture text body.\n\nThank you for the payment.\n",
            "plain", cs,
        )
        html = MIMEText("<p>Receipt Number: <b>4815162342</b></p>", "html", "utf-8")
        alt.attach(text)
        alt.attach(html)
        msg = alt
    else:
        msg = MIMEText(BODIES[k % len(BODIES)] + "\n", "plain", "utf-8")
    messages[uid] = render(headers(msg, uid, frm, to, subj, date))
    INTERNAL[uid] = date

# 141: three attachments (zip, svg, pdf)
m = MIMEMultipart("mixed")
body = MIMEText("Hi,\n\nAttached are the final files for the project.\n\nCheers", "plain", "utf-8")
m.attach(body)
z = MIMEApplication(tiny_zip(), "zip")
z.add_header("Content-Disposition", "attachment", filename="final.zip")
m.attach(z)
s = MIMEText(SVG, "svg+xml", "utf-8")
s.replace_header("Content-Type", 'image/svg+xml; charset="utf-8"; name="prob_plot.svg"')
s.add_header("Content-Disposition", "attachment", filename="prob_plot.svg")
m.attach(s)
p = MIMEApplication(PDF, "pdf")
p.add_header("Content-Disposition", "attachment", filename="staa2072.pdf")
m.attach(p)
messages[141] = render(headers(m, 141, "Paula Reviewer <paula@stats.example.org>", to,
                               "Final files", "06 Nov 2020 13:00:00 +0000"))
INTERNAL[141] = "06 Nov 2020 13:00:00 +0000"

# 144: nested related/alternative with an inline image, plus two attachments
m = MIMEMultipart("mixed")
related = MIMEMultipart("related")
alt = MIMEMultipart("alternative")
alt.attach(MIMEText("See the app and the recording.\n", "plain", "utf-8"))
alt.attach(MIMEText('<p>See the app and the recording.</p><img src="cid:image001">', "html", "utf-8"))
related.attach(alt)
img = MIMEImage(tiny_png(), "png")
img.replace_header("Content-Type", 'image/png; name="image001.png"')
img.add_header("Content-ID", "<image001>")
img.add_header("Content-Disposition", "inline", filename="image001.png")
related.attach(img)
m.attach(related)
r = MIMEText(APP_R, "plain", "us-ascii")
r.replace_header("Content-Type", 'text/plain; charset="us-ascii"; name="app.R"')
r.add_header("Content-Disposition", "attachment", filename="app.R")
m.attach(r)
v = MIMEBase("video", "mp4")
v.set_payload(bytes(rng.getrandbits(8) for _ in range(3000)))
encoders.encode_base64(v)
v.replace_header("Content-Type", 'video/mp4; name="recording.mp4"')
m.attach(v)
messages[144] = render(headers(m, 144, "Carlos Analyst <carlos@company.com>", to,
                               "App and recording", "10 Nov 2020 15:30:00 +0000"))
INTERNAL[144] = "10 Nov 2020 15:30:00 +0000"

# 150: RFC 2231 encoded filename
m = MIMEMultipart("mixed")
m.attach(MIMEText("Segue o relatório.\n", "plain", "utf-8"))
p = MIMEApplication(PDF, "pdf")
p.add_header("Content-Disposition", "attachment", filename=("utf-8", "", "relatório.pdf"))
m.attach(p)
messages[150] = render(headers(m, 150, "Maria Silva <maria@example.com.br>", to,
                               "=?ISO-8859-1?Q?Relat=F3rio?=", "11 Nov 2020 10:10:00 +0000"))
INTERNAL[150] = "11 Nov 2020 10:10:00 +0000"

# outside the November window and other senders
for uid, frm, subj, date in [
    (20, "Newsletter <news@example.com>", "October digest", "15 Oct 2020 07:00:00 +0000"),
    (35, "Alice Smith <alice@example.org>", "Weekend plans", "30 Oct 2020 19:00:00 +0000"),
    (400, "Newsletter <news@example.com>", "November digest", "28 Nov 2020 07:00:00 +0000"),
    (450, "Carlos Analyst <carlos@company.com>", "Year end", "15 Dec 2020 09:30:00 +0000"),
]:
    messages[uid] = render(headers(MIMEText(BODIES[uid % len(BODIES)] + "\n", "plain", "utf-8"),
                                   uid, frm, to, subj, date))
    INTERNAL[uid] = date

sent = {}
for uid, subj, date in [(1, "Re: Seminar schedule", "05 Nov 2020 12:00:00 +0000"),
                        (2, "Re: Final files", "07 Nov 2020 09:00:00 +0000")]:
    sent[uid] = render(headers(MIMEText("Thanks, received.\n", "plain", "utf-8"), 900 + uid,
                               to, "Alice Smith <alice.smith@ksu.edu>", subj, date))
    INTERNAL[("Sent", uid)] = date


def imap_date(rfc):
    d, mon, y, t, z = rfc.split()
    return f"{int(d):02d}-{mon}-{y} {t} {z}"


os.makedirs(OUT, exist_ok=True)
manifest = {"folders": []}
inbox = []
for uid in sorted(messages):
    name = f"inbox-{uid}.eml"
    with open(os.path.join(OUT, name), "wb") as fh:
        fh.write(messages[uid])
    flags = ["\\Seen"] if uid % 3 == 0 else []
    if uid in (145, 341):
        flags.append("\\Flagged")
    inbox.append({"file": name, "uid": uid, "flags": flags, "internal_date": imap_date(INTERNAL[uid])})
manifest["folders"].append({"name": "INBOX", "messages": inbox})
out_sent = []
for uid in sorted(sent):
    name = f"sent-{uid}.eml"
    with open(os.path.join(OUT, name), "wb") as fh:
        fh.write(sent[uid])
    out_sent.append({"file": name, "uid": uid, "flags": ["\\Seen"], "internal_date": imap_date(INTERNAL[("Sent", uid)])})
manifest["folders"].append({"name": "Sent", "messages": out_sent})
with open(os.path.join(OUT, "manifest.json"), "w") as fh:
    json.dump(manifest, fh, indent=2)
    fh.write("\n")
print(f"wrote {len(messages) + len(sent)} messages to {os.path.normpath(OUT)}")
