#!/usr/bin/env python3
"""Generate the bundled desk corpus: synthetic tweet-like messages, one per line.

Deterministic for a fixed --seed. The grammar is small and word choice is
Zipf-weighted.
"""
import argparse
import random

PRON = ["i", "we", "you", "they", "she", "he"]
PRON_OBJ = ["me", "you", "us", "them", "her", "him", "it"]
DET = ["the", "a", "my", "this", "that", "your", "our", "his", "her", "some"]
ADJ = ["good", "great", "new", "bad", "little", "big", "best", "last", "old", "nice",
       "cute", "weird", "funny", "perfect", "crazy", "cold", "hot", "long", "tiny",
       "amazing", "awful", "lovely", "random", "quiet", "busy", "sweet", "strange",
       "favorite", "whole", "real", "early", "late", "free", "cheap", "loud", "brave"]
MOOD = ["happy", "tired", "bored", "excited", "sad", "hungry", "sleepy", "stressed",
        "blessed", "annoyed", "nervous", "proud", "ready", "done", "lost", "fine",
        "grateful", "sick", "confused", "relaxed"]
NOUN = ["day", "time", "night", "game", "phone", "class", "song", "movie", "car",
        "dog", "cat", "house", "coffee", "pizza", "friend", "mom", "dad", "weekend",
        "show", "book", "room", "job", "hair", "team", "party", "bed", "school",
        "music", "life", "work", "food", "weather", "shirt", "video", "picture",
        "sister", "brother", "bus", "train", "dinner", "lunch", "breakfast", "tea",
        "city", "beach", "gym", "store", "test", "homework", "meeting", "email",
        "laptop", "album", "concert", "birthday", "holiday", "trip", "shoes", "jacket",
        "boss", "kid", "baby", "garden", "kitchen", "window", "plan", "idea", "story",
        "question", "answer", "problem", "chance", "news", "photo", "ticket", "office"]
PLACE = ["home", "work", "school", "the gym", "the beach", "the mall", "the park",
         "the store", "church", "the city", "bed", "the office", "the library",
         "the airport", "class", "town", "the lake", "the hospital", "practice"]
TIME = ["today", "tonight", "tomorrow", "right now", "this morning", "this weekend",
        "all day", "again", "last night", "this week", "later", "every day",
        "on monday", "on friday", "next week", "soon", "forever", "already"]
VERB_PRES = ["love", "need", "want", "hate", "miss", "like", "have", "see", "get",
             "watch", "make", "find", "play", "eat", "buy", "read", "hear", "know",
             "keep", "take", "call", "wear", "fix", "clean", "finish", "start"]
VERB_PAST = ["saw", "got", "made", "found", "lost", "watched", "bought", "ate",
             "finished", "started", "broke", "heard", "read", "played", "cleaned",
             "missed", "fixed", "called", "took", "wore", "loved", "hated"]
VERB_ING = ["going", "watching", "eating", "working", "sleeping", "reading",
            "playing", "trying", "thinking", "waiting", "listening", "running",
            "walking", "studying", "driving", "cooking", "laughing", "crying",
            "dancing", "singing", "shopping", "texting"]
AUX = ["am", "was", "is", "are", "were"]
INTERJ = ["lol", "omg", "haha", "ugh", "yay", "wow", "yes", "no", "hahaha", "lmao",
          "ok", "oh", "yeah", "well", "hey", "aww", "damn", "smh", "wait", "nope"]
EMO = [":)", ":(", ";)", ":d", "<3", ":p", "xd", "!!", "!", "...", ":/", "^_^"]
REL = ["mom", "dad", "sister", "brother", "friend", "boyfriend", "girlfriend",
       "roommate", "teacher", "boss", "cousin", "neighbor", "grandma", "dog", "cat"]
PREP = ["in", "at", "with", "for", "on", "about", "from", "to", "after", "before"]
EVENT = ["the game", "the weekend", "summer", "christmas", "the party", "the concert",
         "vacation", "friday", "my birthday", "the trip", "the show", "spring break"]
ADV = ["so", "really", "very", "too", "kinda", "super", "pretty", "literally", "just"]
DAY = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday",
       "birthday", "new year", "halloween", "thanksgiving"]
VOC = ["everyone", "guys", "babe", "y'all", "world", "friends", "twitter", "fam"]
END = [".", ".", ".", "!", "!", "?", "", "", "..."]
DOMAINS = ["bit.ly", "t.co", "youtu.be", "instagr.am", "example.com", "pic.twitter.com"]
NAMES = ["alex", "sam", "jordan", "casey", "taylor", "morgan", "riley", "jamie",
         "drew", "kim", "lee", "pat", "chris", "robin", "dana", "max", "nico", "jess"]


class Gen:
    def __init__(self, seed):
        self.r = random.Random(seed)

    def z(self, xs, s=1.0):
        """Zipf-weighted pick: earlier items are more frequent."""
        w = [1.0 / (i + 1) ** s for i in range(len(xs))]
        return self.r.choices(xs, weights=w, k=1)[0]

    def user(self):
        return "@" + self.r.choice(NAMES) + str(self.r.randint(1, 999))

    def url(self):
        dom = self.r.choice(DOMAINS)
        path = "".join(self.r.choice("abcdefghijkmnpqrstuvwxyz0123456789") for _ in range(6))
        return "http://%s/%s" % (dom, path)

    def end(self, text):
        e = self.z(END, 0.6)
        return text + e

    def np(self):
        r = self.r.random()
        if r < 0.45:
            return "%s %s" % (self.z(DET), self.z(NOUN))
        if r < 0.8:
            return "%s %s %s" % (self.z(DET), self.z(ADJ), self.z(NOUN))
        return self.z(PRON_OBJ)

    def clause(self):
        k = self.r.random()
        p = self.z(PRON)
        if k < 0.14:
            return "%s %s %s" % (p, self.z(VERB_PRES), self.np())
        if k < 0.26:
            return "%s %s %s %s" % (p, self.z(VERB_PAST), self.np(), self.z(TIME))
        if k < 0.38:
            aux = {"i": "am", "you": "are", "we": "are", "they": "are"}.get(p, "is")
            return "%s %s %s %s %s" % (p, aux, self.z(VERB_ING), self.z(PREP), self.np())
        if k < 0.48:
            return "i feel %s %s %s" % (self.z(ADV), self.z(MOOD), self.z(TIME))
        if k < 0.56:
            return "my %s %s %s" % (self.z(REL), self.z(VERB_PAST), self.np())
        if k < 0.63:
            return "why is %s %s %s %s" % (self.z(DET), self.z(NOUN), self.z(ADV), self.z(ADJ))
        if k < 0.69:
            return "can't wait for %s" % self.z(EVENT)
        if k < 0.75:
            return "going to %s %s" % (self.z(PLACE), self.z(TIME))
        if k < 0.80:
            return "happy %s %s" % (self.z(DAY), self.z(VOC))
        if k < 0.86:
            return "this %s is %s %s" % (self.z(NOUN), self.z(ADV), self.z(ADJ))
        if k < 0.91:
            return "i don't want to %s %s" % (self.z(VERB_PRES), self.np())
        if k < 0.95:
            return "%s %s was %s %s" % (self.z(DET), self.z(NOUN), self.z(ADV), self.z(ADJ))
        return "just %s %s at %s" % (self.z(VERB_PAST), self.np(), self.z(PLACE))

    def message(self):
        parts = []
        if self.r.random() < 0.04:
            parts.append("rt " + self.user() + ":")
        elif self.r.random() < 0.18:
            parts.append(self.user())
        if self.r.random() < 0.2:
            parts.append(self.z(INTERJ) + self.r.choice(["", ",", "!", " ..."]))
        n = 1 if self.r.random() < 0.65 else 2
        for _ in range(n):
            parts.append(self.end(self.clause()))
        if self.r.random() < 0.2:
            parts.append(self.z(EMO))
        if self.r.random() < 0.08:
            parts.append(self.url())
        return " ".join(p for p in parts if p)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=2017)
    ap.add_argument("--messages", type=int, default=9500)
    args = ap.parse_args()
    g = Gen(args.seed)
    for _ in range(args.messages):
        print(g.message())


if __name__ == "__main__":
    main()
