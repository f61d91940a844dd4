#!/usr/bin/env python3
"""Regenerate the offline fixtures: a small role-play corpus and a mock LLM script."""

import argparse
import json
import random
from pathlib import Path

CASES = {
    "A": {"name": "Marco", "gen": "Gendered division of sport practices",
          "chat": ["the ballet show is on friday at eight", "are tickets free for the show",
                   "my sister does dance too", "I have never seen a ballet live",
                   "which theatre is it in", "I can give people a ride to the show"]},
    "B": {"name": "Giulia", "gen": "Interference in others",
          "chat": ["the principal called my parents yesterday", "we have detention on thursday",
                   "did the teachers say anything else", "the smoking rule is in the handbook",
                   "who is doing the science project with me", "recess is shorter this week"]},
    "C": {"name": "Luca", "gen": "Lack of independence, parental intromission",
          "chat": ["the math homework is due on monday", "how many exercises did she assign",
                   "I will be at football until six", "can someone share the page numbers",
                   "my mom says the extra work is fine", "the history reading is long"]},
    "D": {"name": "Sara", "gen": "Web virality",
          "chat": ["the video has two thousand views now", "who uploaded it first",
                   "the party was at Paolo's house", "my phone died during the party",
                   "is the video still on the class page", "the music at the party was loud"]},
}

HARM = {
    "Insult": ["you are such a {w}", "what a {w} {n} is", "{n} is a pathetic {w}",
               "shut up you {w}", "only a {w} would do that {n}"],
    "Threat/Blackmail": ["watch your back {n}", "if you tell anyone I will make you pay",
                         "wait until tomorrow {n}, you will regret it",
                         "give me your answers or the screenshots go public"],
    "Curse/Exclusion": ["nobody wants you in this group {n}", "get out of the chat {n}",
                        "we are removing {n} from everything", "I hope you fail every test {n}"],
    "Defamation": ["everyone should know what {n} did last summer",
                   "I heard {n} cheats on every test", "{n} told the teachers lies about us"],
    "BodyShame": ["look at those skinny legs {n}", "{n} is too fat for the stage",
                  "with that face {n} should stay home"],
    "EncouragementToHarasser": ["haha {b} is right", "so true {b}", "tell {n} again {b}",
                                "lol {b} you said it"],
}
INSULTS = ["idiot", "loser", "clown", "moron", "freak", "weirdo"]
DEFENSE = ["leave {n} alone", "stop it, that is not funny", "{n} did nothing wrong",
           "we are with you {n}", "enough, be kind to {n}", "you should apologise to {n}"]
TAILS = ["", " today", " again", "!!", " seriously", " honestly", " right now", " for real",
         " every single day", " ok", " guys", " lol", " tbh", " already"]
HEADS = ["", "hey ", "guys ", "btw ", "so ", "wait ", "ok "]
BULLIES = ["BULLY1", "BULLY2", "BSUP1", "BSUP2", "BSUP3", "BSUP4"]
SUPPORT = ["VCTM", "VSUP1", "VSUP2", "VSUP3", "VSUP4"]
EVERYONE = BULLIES + SUPPORT


class Writer:
    def __init__(self, rng):
        self.rng = rng
        self.seen = {}

    def line(self, template, name, bully, label):
        for _ in range(200):
            text = template.format(n=name, w=self.rng.choice(INSULTS), b=bully)
            text = self.rng.choice(HEADS) + text + self.rng.choice(TAILS)
            if self.seen.get(text, label) == label and text not in self.seen:
                self.seen[text] = label
                return text
        raise RuntimeError("template space exhausted: " + template)


def conversation(rng, writer, case, length):
    info = CASES[case]
    msgs = []
    for _ in range(length):
        r = rng.random()
        if r < 0.30:
            cat = rng.choice(list(HARM))
            role = rng.choice(BULLIES) if rng.random() < 0.85 else rng.choice(SUPPORT)
            text = writer.line(rng.choice(HARM[cat]), info["name"], rng.choice(["BULLY1", "BULLY2"]), 1)
        elif r < 0.45:
            cat, role = "Defense", rng.choice(SUPPORT)
            text = writer.line(rng.choice(DEFENSE), info["name"], "", 0)
        else:
            cat, role = None, rng.choice(EVERYONE)
            text = writer.line(rng.choice(info["chat"]), info["name"], "", 0)
        msgs.append((role, text, cat))
    return msgs


def write_corpus(rng, writer, path, per_case):
    lines = []
    splits = ["train", "train", "train", "validation", "test"]
    for case in CASES:
        for k in range(per_case):
            conv_id = f"wa-{case}-{k + 1}"
            split = splits[k % len(splits)]
            for seq, (role, text, cat) in enumerate(conversation(rng, writer, case, 20), start=1):
                rec = {"id": f"{conv_id}-{seq}", "conversation_id": conv_id, "case": case,
                       "role": role, "seq": seq, "text": text}
                if cat:
                    rec["fine_category"] = cat
                rec["split"] = split
                lines.append(json.dumps(rec, ensure_ascii=False))
    path.write_text("\n".join(lines) + "\n")


def transcript(rng, writer, case, length, style):
    out = ["Here is the conversation you asked for:", ""]
    for seq, (role, text, _) in enumerate(conversation(rng, writer, case, length), start=1):
        if style == 0:
            out.append(f"{seq}. {role}: {text}")
        elif style == 1:
            out.append(f"**{seq}. {role}:** {text}")
        else:
            out.append(f"{seq}) {role}: {text}")
    out += ["", "Let me know if you need another one."]
    return "\n".join(out)


def write_script(rng, writer, path):
    harm_words = ("idiot|loser|clown|moron|freak|weirdo|watch your back|make you pay|regret|"
                  "screenshots|nobody wants you|get out of the chat|removing|fail every test|"
                  "everyone should know|lies about us|skinny|with that face|is right|so true|"
                  "you said it|tell \\w+ again")
    # Label prompts end with the message after "'No Harm'. "; anchoring there keeps the
    # guideline text out of the match.
    anchor = "'No Harm'\\. "
    entries = [
        {"regex": anchor + ".*too fat", "response": "I can't help with judging that message.",
         "finish_reason": "content_filter"},
        {"regex": anchor + ".*ride to the show", "response": "Unclear."},
        {"regex": anchor + ".*(leave \\w+ alone|not funny)", "response": "No Harm"},
        {"regex": anchor + ".*(" + harm_words + ")", "response": "Harm"},
        {"regex": anchor, "response": "No Harm"},
    ]
    for case, info in CASES.items():
        replies = [transcript(rng, writer, case, rng.randint(24, 30), style) for style in range(3)]
        replies.append(transcript(rng, writer, case, 8, 0))
        entries.append({"contains": info["gen"], "responses": replies})
    path.write_text("\n".join(json.dumps(e, ensure_ascii=False) for e in entries) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "fixtures")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)
    writer = Writer(rng)
    write_corpus(rng, writer, args.out / "wa_like.jsonl", per_case=5)
    write_script(rng, writer, args.out / "mock_script.jsonl")


if __name__ == "__main__":
    main()
