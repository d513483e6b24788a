"""Regenerate corpus.txt: small deterministic grammar text, about 10 kB."""
import random

rng = random.Random(20240501)
subjects = ["the miller", "a small boat", "the old road", "my sister", "the river", "a grey cat",
            "the north wind", "our neighbour", "the lantern", "a tired horse"]
verbs = ["follows", "watches", "carries", "remembers", "finds", "crosses", "waits for", "leaves"]
objects = ["the bridge", "a bundle of wood", "the long field", "the evening bell", "the harbour",
           "a letter", "the hill", "the quiet house", "the orchard", "a basket of apples"]
tails = ["before dark", "after the rain", "in the morning", "without a word", "once again",
         "near the water", "at the edge of town"]

out = []
size = 0
while size < 10240:
    s = f"{rng.choice(subjects)} {rng.choice(verbs)} {rng.choice(objects)}"
    if rng.random() < 0.6:
        s += " " + rng.choice(tails)
    s = s[0].upper() + s[1:] + ("." if rng.random() < 0.85 else "?")
    out.append(s)
    size += len(s) + 1
text = ""
line = ""
for s in out:
    if len(line) + len(s) + 1 > 72:
        text += line.rstrip() + "\n"
        line = ""
    line += s + " "
text += line.rstrip() + "\n"
open("corpus.txt", "w").write(text[:10240].rstrip() + "\n")
