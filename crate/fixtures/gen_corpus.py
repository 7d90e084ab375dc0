#!/usr/bin/env python3
"""Writes the synthetic fixture corpus under fixtures/corpus.

    python3 fixtures/gen_corpus.py

Output is a pure function of SEED, so re-running reproduces the checked-in
files byte for byte.
"""

import json
import os
import random
from xml.sax.saxutils import escape

SEED = 20231018
N_DOCS = 50
N_ARXIV = 24
N_CODE = 24
HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "corpus")

ROCKS = ["basalt", "granite", "andesite", "rhyolite", "gneiss", "schist",
         "limestone", "sandstone", "shale", "peridotite", "dolomite", "tuff"]
PLACES = ["the Tarim Basin", "the Ordos Basin", "the Alps", "Iceland",
          "the Andes", "the North China Craton", "the Sichuan Basin",
          "the Baltic Shield", "the East African Rift", "the Deccan Traps"]
PROCESSES = ["subduction", "crustal thickening", "hydrothermal alteration",
             "fluvial incision", "glacial erosion", "partial melting",
             "diagenesis", "metasomatism", "rifting", "compaction"]
QUANTITIES = ["porosity", "permeability", "seismic velocity", "grain size",
              "heat flow", "strain rate", "zircon age", "total organic carbon"]
AUTHORS = ["Zhang", "Smith", "Garcia", "Müller", "Tanaka", "Okafor", "Silva",
           "Novak", "Larsen", "Chen", "Ivanova", "Dubois"]
JOURNALS = ["Journal of Geophysical Research", "Earth and Planetary Science Letters",
            "Geology", "Tectonophysics", "Chemical Geology", "Sedimentology"]
FORMULAS = ["v_p = \\sqrt{(K + 4\\mu/3)/\\rho}", "q = -k \\nabla T",
            "\\phi = 1 - \\rho_b/\\rho_s", "\\tau = \\mu \\sigma_n + c",
            "t = \\frac{1}{\\lambda} \\ln(1 + D/P)", "Q = \\frac{k A \\Delta P}{\\mu L}"]
HEADINGS = ["Introduction", "Geological setting", "Methods", "Results",
            "Discussion", "Sampling and analysis", "Conclusions"]
FIG_KW = ["Fig.", "Figure", "fig.", "FIG."]
TAB_KW = ["Table", "Tab.", "table"]


def sentence(rng):
    r, p, q, s = rng.choice(ROCKS), rng.choice(PLACES), rng.choice(QUANTITIES), rng.choice(PROCESSES)
    return rng.choice([
        f"The {r} samples from {p} record {s} during the late stage.",
        f"Measured {q} in the {r} decreases with depth.",
        f"We attribute the anomaly in {q} to {s} beneath {p}.",
        f"Previous work in {p} linked {r} formation to {s}.",
        f"Our data constrain {q} to within ten percent across the section.",
        f"These observations suggest that {s} controlled the {r} fabric.",
    ])


class Doc:
    def __init__(self, rng, n):
        self.rng = rng
        self.n = n
        self.n_fig = rng.randint(1, 3)
        self.n_tab = rng.randint(0, 2)
        self.n_bib = rng.randint(3, 6)
        self.formula_id = 0
        # Ground truth for the linker: (kind, keyword, index, sentence, expect).
        self.mentions = []

    def cite(self):
        k = self.rng.randrange(self.n_bib + (1 if self.rng.random() < 0.1 else 0))
        return f'<ref type="bibr" target="#b{k}">[{k + 1}]</ref>'

    def mention(self):
        rng = self.rng
        roll = rng.random()
        place, q = rng.choice(PLACES), rng.choice(QUANTITIES)
        if roll < 0.55:
            i, kw = rng.randint(1, self.n_fig), rng.choice(FIG_KW)
            m = ("figure", kw, i, f"{kw} {i} shows the {q} profile across {place}.", "internal")
        elif roll < 0.75 and self.n_tab:
            i, kw = rng.randint(1, self.n_tab), rng.choice(TAB_KW)
            m = ("table", kw, i, f"{kw} {i} lists the {q} values of each {rng.choice(ROCKS)} sample.", "internal")
        elif roll < 0.85:
            i = self.n_fig + rng.randint(5, 9)
            m = ("figure", "Fig.", i, f"A similar trend appears in Fig. {i} of {rng.choice(AUTHORS)} et al.", "exceeds-count")
        elif roll < 0.92:
            i = rng.randint(1, self.n_fig)
            m = ("figure", "Figure", i, f"The pattern matches Figure {i} of the earlier survey.", "of-proximity")
        else:
            i = rng.randint(1, self.n_fig)
            m = ("figure", "Fig.", i, f"The contrast is clearest in Fig. {i}.", "internal")
            self.mentions.append(m)
            return m[3] + " Mapping confirms it."
        self.mentions.append(m)
        return m[3]

    def paragraph(self):
        rng = self.rng
        parts = []
        for _ in range(rng.randint(3, 6)):
            s = escape(sentence(rng))
            if rng.random() < 0.4:
                s = s[:-1] + " " + self.cite() + "."
            parts.append(s)
            if rng.random() < 0.35:
                parts.append(escape(self.mention()))
        if rng.random() < 0.2:
            parts.append(f"Here <formula>{escape(rng.choice(FORMULAS))}</formula> holds locally.")
        if rng.random() < 0.05:
            parts.append("The token [START_REF] is quoted literally here.")
        return "<p>" + " ".join(parts) + "</p>"

    def figure(self, i):
        rng = self.rng
        desc = "" if (i == self.n_fig and rng.random() < 0.1) else \
            f"<figDesc>{escape(rng.choice(QUANTITIES).capitalize())} map of {escape(rng.choice(PLACES))} showing {escape(rng.choice(ROCKS))} outcrops.</figDesc>"
        return (f'<figure xml:id="fig_{i - 1}"><head>Fig. {i}</head><label>{i}</label>{desc}'
                f'<graphic url="figures/d{self.n:03d}_f{i}.png"/></figure>')

    def table(self, i):
        rng = self.rng
        cols = rng.randint(2, 4)
        rows = [["Sample", "Rock", "Value", "Note"][:cols]]
        for r in range(rng.randint(2, 4)):
            row = [f"S{r + 1}", rng.choice(ROCKS), f"{rng.uniform(0, 100):.1f}", rng.choice(["a|b", "n/a", "x"])][:cols]
            rows.append(row)
        if rng.random() < 0.15:
            rows[-1] = rows[-1][:-1]
        body = "".join("<row>" + "".join(f"<cell>{escape(c)}</cell>" for c in row) + "</row>" for row in rows)
        return (f'<figure type="table" xml:id="tab_{i - 1}"><head>Table {i}</head>'
                f'<figDesc>{escape(rng.choice(QUANTITIES).capitalize())} of samples from {escape(rng.choice(PLACES))}.</figDesc>'
                f'<table>{body}</table></figure>')

    def display_formula(self):
        self.formula_id += 1
        return (f'<formula xml:id="formula_{self.formula_id - 1}">{escape(self.rng.choice(FORMULAS))}'
                f'<label>({self.formula_id})</label></formula>')

    def bibl(self, k):
        rng = self.rng
        title = f"{rng.choice(PROCESSES).capitalize()} and {rng.choice(ROCKS)} genesis in {rng.choice(PLACES)}"
        return (f'<biblStruct xml:id="b{k}"><analytic><title level="a" type="main">{escape(title)}</title>'
                f'<author><persName><surname>{rng.choice(AUTHORS)}</surname></persName></author></analytic>'
                f'<monogr><title level="j">{rng.choice(JOURNALS)}</title>'
                f'<imprint><date when="{rng.randint(1975, 2022)}"/></imprint></monogr></biblStruct>')

    def render(self):
        rng = self.rng
        title = f"{rng.choice(PROCESSES).capitalize()} of {rng.choice(ROCKS)} in {rng.choice(PLACES)}"
        floats = [self.figure(i) for i in range(1, self.n_fig + 1)] + \
                 [self.table(i) for i in range(1, self.n_tab + 1)]
        headings = rng.sample(HEADINGS, rng.randint(2, 4))
        divs = []
        for h_i, h in enumerate(headings):
            blocks = [self.paragraph() for _ in range(rng.randint(1, 3))]
            if rng.random() < 0.3:
                blocks.insert(rng.randint(0, len(blocks)), self.display_formula())
            take = len(floats) // (len(headings) - h_i) if h_i < len(headings) - 1 else len(floats)
            blocks.extend(floats[:take])
            floats = floats[take:]
            divs.append(f"<div><head>{escape(h)}</head>" + "".join(blocks) + "</div>")
        bibl = "".join(self.bibl(k) for k in range(self.n_bib))
        return (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            '<TEI xmlns="http://www.tei-c.org/ns/1.0">\n'
            f'<teiHeader><fileDesc><titleStmt><title level="a" type="main">{escape(title)}</title></titleStmt>'
            f'<sourceDesc><biblStruct><idno type="DOI">10.5555/fixture.{self.n:03d}</idno></biblStruct></sourceDesc>'
            '</fileDesc></teiHeader>\n'
            '<text><body>\n' + "\n".join(divs) + '\n</body>\n'
            f'<back><div type="references"><listBibl>{bibl}</listBibl></div></back></text>\n</TEI>\n'
        )


def prose(rng, n):
    return " ".join(sentence(rng) for _ in range(n))


def code(rng, i):
    q = rng.choice(QUANTITIES).replace(" ", "_")
    return (f"def mean_{q}(samples):\n"
            f"    \"\"\"Average {q} over samples {i}.\"\"\"\n"
            f"    total = 0.0\n"
            f"    for s in samples:\n"
            f"        total += s[\"{q}\"]\n"
            f"    return total / max(len(samples), 1)\n\n"
            f"LIMITS_{i} = {{\"min\": {rng.randint(0, 9)}, \"max\": {rng.randint(10, 99)}}}\n")


def write(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def main():
    rng = random.Random(SEED)
    truth = []
    for n in range(N_DOCS):
        doc = Doc(rng, n)
        write(os.path.join(OUT, "tei", f"doc_{n:03d}.xml"), doc.render())
        for kind, kw, i, text, expect in doc.mentions:
            truth.append(json.dumps({"doc": f"doc_{n:03d}", "kind": kind, "keyword": kw, "index": i,
                                     "sentence": text, "expect": expect}, ensure_ascii=False))
    write(os.path.join(OUT, "mentions.jsonl"), "\n".join(truth) + "\n")
    for i in range(N_ARXIV):
        write(os.path.join(OUT, "arxiv", f"paper_{i:03d}.txt"), prose(rng, rng.randint(20, 40)) + "\n")
    for i in range(N_CODE):
        write(os.path.join(OUT, "code", f"snippet_{i:03d}.txt"), "".join(code(rng, i * 10 + k) for k in range(4)))


if __name__ == "__main__":
    main()
