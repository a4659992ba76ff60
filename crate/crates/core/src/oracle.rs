//! Text-only replay solver. Knows nothing about the generator: it parses the
//! rendered sentences back into events and answers by replaying them.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::world::{Event, TaskId};

static MOVE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(\w+) (?:moved|went back|went|travelled|traveled|journeyed|came back|come back) to (?:the )?(\w+)\.$",
    )
    .unwrap()
});
static GRAB: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\w+) (?:grabbed|took|picked up|got) (?:the |a )?(\w+)(?: there)?\.$").unwrap()
});
static DROP: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\w+) (?:dropped|discarded|put down|left) (?:the |a )?(\w+)\.$").unwrap()
});
static GIVE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\w+) (?:gave|handed|passed) (?:the |a )?(\w+) to (\w+)\.$").unwrap()
});
static RELATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^The (\w+) is (north|south|east|west) of the (\w+)\.$").unwrap()
});

/// Parse one rendered fact sentence.
pub fn parse_fact(text: &str) -> Result<Event> {
    let t = text.trim();
    let s = |c: &regex::Captures, i: usize| c[i].to_string();
    if let Some(c) = RELATION.captures(t) {
        return Ok(Event::Relation {
            subject: s(&c, 1),
            direction: s(&c, 2),
            reference: s(&c, 3),
        });
    }
    if let Some(c) = GIVE.captures(t) {
        return Ok(Event::Give {
            giver: s(&c, 1),
            object: s(&c, 2),
            receiver: s(&c, 3),
        });
    }
    if let Some(c) = MOVE.captures(t) {
        return Ok(Event::Move {
            actor: s(&c, 1),
            location: s(&c, 2),
        });
    }
    if let Some(c) = GRAB.captures(t) {
        return Ok(Event::Grab {
            actor: s(&c, 1),
            object: s(&c, 2),
        });
    }
    if let Some(c) = DROP.captures(t) {
        return Ok(Event::Drop {
            actor: s(&c, 1),
            object: s(&c, 2),
        });
    }
    Err(Error::UnparsableFact(text.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Op {
    Move(u32, u32),
    Grab(u32, u32),
    Drop(u32, u32),
    Give(u32, u32, u32),
    Rel(u32, u8, u32),
}

/// A parsed question.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Query {
    WherePerson(u32),
    WhereObject(u32),
    Before(u32, u32),
    WhatIsDirOf(u8, u32),
    WhatIsXDirOf(u32, u8),
    WhatGave(u32, u32),
    WhoGaveTo(u32, u32),
    WhoDidGive(u32, u32),
    WhoGave(u32),
    WhoReceived(u32),
}

const DIRS: [&str; 4] = ["north", "south", "east", "west"];

fn dir_id(d: &str) -> u8 {
    DIRS.iter().position(|x| *x == d).unwrap() as u8
}

fn opposite(d: u8) -> u8 {
    d ^ 1
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Obj {
    Unknown,
    At(u32),
    Held(u32),
}

/// Facts parsed once and interned, ready to be replayed under any subset.
pub struct Oracle {
    task: TaskId,
    names: Vec<String>,
    ids: HashMap<String, u32>,
    ops: Vec<Op>,
}

impl Oracle {
    pub fn new<S: AsRef<str>>(task: TaskId, facts: &[S]) -> Result<Self> {
        let mut o = Self {
            task,
            names: Vec::new(),
            ids: HashMap::new(),
            ops: Vec::with_capacity(facts.len()),
        };
        for f in facts {
            let op = match parse_fact(f.as_ref())? {
                Event::Move { actor, location } => Op::Move(o.intern(&actor), o.intern(&location)),
                Event::Grab { actor, object } => Op::Grab(o.intern(&actor), o.intern(&object)),
                Event::Drop { actor, object } => Op::Drop(o.intern(&actor), o.intern(&object)),
                Event::Give {
                    giver,
                    receiver,
                    object,
                } => Op::Give(o.intern(&giver), o.intern(&receiver), o.intern(&object)),
                Event::Relation {
                    subject,
                    direction,
                    reference,
                } => Op::Rel(o.intern(&subject), dir_id(&direction), o.intern(&reference)),
            };
            o.ops.push(op);
        }
        Ok(o)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    /// Names that never occur in the facts are interned too so that the
    /// question still parses; they simply have no state.
    pub fn parse_question(&mut self, question: &str) -> Result<Query> {
        static PATTERNS: LazyLock<Vec<(TaskId, u8, Regex)>> = LazyLock::new(|| {
            let d = "(north|south|east|west)";
            [
                (TaskId::Qa1, 0, r"^Where is (\w+)\?$".to_string()),
                (TaskId::Qa2, 1, r"^Where is the (\w+)\?$".to_string()),
                (TaskId::Qa3, 2, r"^Where was the (\w+) before the (\w+)\?$".to_string()),
                (TaskId::Qa4, 3, format!(r"^What is {d} of the (\w+)\?$")),
                (TaskId::Qa4, 4, format!(r"^What is the (\w+) {d} of\?$")),
                (TaskId::Qa5, 5, r"^What did (\w+) give to (\w+)\?$".to_string()),
                (TaskId::Qa5, 6, r"^Who gave the (\w+) to (\w+)\?$".to_string()),
                (TaskId::Qa5, 7, r"^Who did (\w+) give the (\w+) to\?$".to_string()),
                (TaskId::Qa5, 8, r"^Who gave the (\w+)\?$".to_string()),
                (TaskId::Qa5, 9, r"^Who received the (\w+)\?$".to_string()),
            ]
            .into_iter()
            .map(|(t, k, p)| (t, k, Regex::new(&p).unwrap()))
            .collect()
        });
        let q = question.trim();
        for (task, kind, re) in PATTERNS.iter() {
            if *task != self.task {
                continue;
            }
            let Some(c) = re.captures(q) else { continue };
            let a = c[1].to_string();
            let b = c.get(2).map(|m| m.as_str().to_string());
            let query = match kind {
                0 => Query::WherePerson(self.intern(&a)),
                1 => Query::WhereObject(self.intern(&a)),
                2 => Query::Before(self.intern(&a), self.intern(&b.unwrap())),
                3 => Query::WhatIsDirOf(dir_id(&a), self.intern(&b.unwrap())),
                4 => Query::WhatIsXDirOf(self.intern(&a), dir_id(&b.unwrap())),
                5 => Query::WhatGave(self.intern(&a), self.intern(&b.unwrap())),
                6 => Query::WhoGaveTo(self.intern(&a), self.intern(&b.unwrap())),
                7 => Query::WhoDidGive(self.intern(&a), self.intern(&b.unwrap())),
                8 => Query::WhoGave(self.intern(&a)),
                _ => Query::WhoReceived(self.intern(&a)),
            };
            return Ok(query);
        }
        Err(Error::Invalid(format!("unrecognised {} question `{question}`", self.task)))
    }

    /// Answer using every fact except `skip`.
    pub fn answer_without(&self, query: Query, skip: Option<usize>) -> Result<String> {
        self.replay(query, |i| Some(i) != skip)
    }

    /// Answer using only the facts whose index is in `keep` (sorted).
    pub fn answer_with_only(&self, query: Query, keep: &[usize]) -> Result<String> {
        self.replay(query, |i| keep.binary_search(&i).is_ok())
    }

    fn replay(&self, query: Query, keep: impl Fn(usize) -> bool) -> Result<String> {
        let n = self.names.len();
        let mut loc: Vec<Option<u32>> = vec![None; n];
        let mut obj = vec![Obj::Unknown; n];
        let mut hist: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut gives: Vec<(u32, u32, u32)> = Vec::new();
        let mut rels: Vec<(u32, u8, u32)> = Vec::new();

        fn note(hist: &mut [Vec<u32>], o: u32, l: Option<u32>) {
            if let Some(l) = l {
                let h = &mut hist[o as usize];
                if h.last() != Some(&l) {
                    h.push(l);
                }
            }
        }

        for (i, op) in self.ops.iter().enumerate() {
            if !keep(i) {
                continue;
            }
            match *op {
                Op::Move(p, l) => {
                    loc[p as usize] = Some(l);
                    for o in 0..n {
                        if obj[o] == Obj::Held(p) {
                            note(&mut hist, o as u32, Some(l));
                        }
                    }
                }
                Op::Grab(p, o) => {
                    obj[o as usize] = Obj::Held(p);
                    note(&mut hist, o, loc[p as usize]);
                }
                Op::Drop(p, o) => {
                    let l = loc[p as usize];
                    obj[o as usize] = l.map_or(Obj::Unknown, Obj::At);
                    note(&mut hist, o, l);
                }
                Op::Give(p, q, o) => {
                    obj[o as usize] = Obj::Held(q);
                    gives.push((p, q, o));
                    note(&mut hist, o, loc[q as usize]);
                }
                Op::Rel(a, d, b) => {
                    rels.push((a, d, b));
                    rels.push((b, opposite(d), a));
                }
            }
        }

        let none = || Error::Unanswerable(format!("{query:?}"));
        let last_give = |f: &dyn Fn(&(u32, u32, u32)) -> bool| gives.iter().rev().find(|g| f(g)).copied();
        let unique = |xs: Vec<u32>| -> Option<u32> {
            let mut xs = xs;
            xs.sort_unstable();
            xs.dedup();
            (xs.len() == 1).then(|| xs[0])
        };
        let id = match query {
            Query::WherePerson(p) => loc[p as usize],
            Query::WhereObject(o) => match obj[o as usize] {
                Obj::At(l) => Some(l),
                Obj::Held(p) => loc[p as usize],
                Obj::Unknown => None,
            },
            Query::Before(o, l) => {
                let h = &hist[o as usize];
                h.iter().rposition(|&x| x == l).filter(|&i| i > 0).map(|i| h[i - 1])
            }
            Query::WhatIsDirOf(d, b) => unique(rels.iter().filter(|r| r.1 == d && r.2 == b).map(|r| r.0).collect()),
            Query::WhatIsXDirOf(a, d) => unique(rels.iter().filter(|r| r.0 == a && r.1 == d).map(|r| r.2).collect()),
            Query::WhatGave(p, q) => last_give(&|g| g.0 == p && g.1 == q).map(|g| g.2),
            Query::WhoGaveTo(o, q) => last_give(&|g| g.2 == o && g.1 == q).map(|g| g.0),
            Query::WhoDidGive(p, o) => last_give(&|g| g.0 == p && g.2 == o).map(|g| g.1),
            Query::WhoGave(o) => last_give(&|g| g.2 == o).map(|g| g.0),
            Query::WhoReceived(o) => last_give(&|g| g.2 == o).map(|g| g.1),
        };
        id.map(|i| self.names[i as usize].clone()).ok_or_else(none)
    }

    /// Facts whose individual removal changes or breaks the answer, provided
    /// they alone still produce it. `None` when the question is unanswerable
    /// or no such minimal set exists (redundant evidence).
    pub fn supporting(&self, query: Query) -> Result<Option<Vec<usize>>> {
        let full = match self.answer_without(query, None) {
            Ok(a) => a,
            Err(Error::Unanswerable(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let set: Vec<usize> = (0..self.ops.len())
            .filter(|&i| self.answer_without(query, Some(i)).ok().as_ref() != Some(&full))
            .collect();
        if set.is_empty() || self.answer_with_only(query, &set).ok().as_ref() != Some(&full) {
            return Ok(None);
        }
        for (k, _) in set.iter().enumerate() {
            let mut sub = set.clone();
            sub.remove(k);
            if self.answer_with_only(query, &sub).ok().as_ref() == Some(&full) {
                return Ok(None);
            }
        }
        Ok(Some(set))
    }
}

/// Replay `facts` and answer `question`.
pub fn oracle_answer<S: AsRef<str>>(task: TaskId, facts: &[S], question: &str) -> Result<String> {
    let mut o = Oracle::new(task, facts)?;
    let q = o.parse_question(question)?;
    o.answer_without(q, None)
}

/// Supporting-fact indices of a well-posed sample, or an error when the
/// question is unanswerable or its evidence is not minimal.
pub fn supporting_facts<S: AsRef<str>>(task: TaskId, facts: &[S], question: &str) -> Result<Vec<usize>> {
    let mut o = Oracle::new(task, facts)?;
    let q = o.parse_question(question)?;
    o.supporting(q)?
        .ok_or_else(|| Error::Unanswerable(format!("no minimal supporting set for `{question}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(s: &str) -> Vec<String> {
        s.split_inclusive(". ").map(|x| x.trim().to_string()).collect()
    }

    #[test]
    fn single_move() {
        let a = oracle_answer(TaskId::Qa1, &["Xavier moved to the kitchen."], "Where is Xavier?").unwrap();
        assert_eq!(a, "kitchen");
    }

    #[test]
    fn qa1_sample() {
        let facts = split(
            "Sandra moved to the kitchen. Sandra went back to the garden. Sandra journeyed to the office. \
             Mary moved to the office. Sandra journeyed to the bathroom. Daniel moved to the office. \
             Daniel went back to the kitchen. Mary moved to the hallway.",
        );
        assert_eq!(facts.len(), 8);
        assert_eq!(oracle_answer(TaskId::Qa1, &facts, "Where is Mary?").unwrap(), "hallway");
        assert_eq!(supporting_facts(TaskId::Qa1, &facts, "Where is Mary?").unwrap(), vec![7]);
    }

    #[test]
    fn qa2_sample() {
        let facts = split(
            "John journeyed to the garden. John grabbed the apple there. Mary travelled to the hallway. \
             Mary went back to the bathroom. Mary went to the garden. Mary travelled to the office. \
             Daniel went to the office. Daniel went to the bedroom. Sandra went back to the office. \
             Sandra journeyed to the garden. Mary travelled to the kitchen. Daniel moved to the kitchen. \
             John put down the apple. Daniel journeyed to the garden. Sandra went to the bathroom. \
             John got the apple there. Daniel travelled to the bedroom. Sandra moved to the hallway. \
             John discarded the apple. Mary travelled to the garden.",
        );
        assert_eq!(facts.len(), 20);
        assert_eq!(oracle_answer(TaskId::Qa2, &facts, "Where is the apple?").unwrap(), "garden");
    }

    #[test]
    fn qa3_sample() {
        let facts = split(
            "Sandra travelled to the office. Sandra picked up the football there. \
             Sandra journeyed to the garden. Sandra journeyed to the bathroom.",
        );
        let q = "Where was the football before the bathroom?";
        assert_eq!(oracle_answer(TaskId::Qa3, &facts, q).unwrap(), "garden");
        assert_eq!(supporting_facts(TaskId::Qa3, &facts, q).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn qa4_sample() {
        let facts = ["The garden is south of the bathroom.", "The bedroom is north of the bathroom."];
        assert_eq!(oracle_answer(TaskId::Qa4, &facts, "What is south of the bathroom?").unwrap(), "garden");
        assert_eq!(oracle_answer(TaskId::Qa4, &facts, "What is the bathroom south of?").unwrap(), "bedroom");
    }

    #[test]
    fn qa5_sample() {
        let facts = split(
            "Fred grabbed the football there. Jeff took the apple there. Jeff dropped the apple. \
             Bill picked up the apple there. Mary travelled to the kitchen. Mary went back to the hallway. \
             Bill went to the garden. Fred travelled to the garden. Bill passed the apple to Fred. \
             Fred left the apple. Fred went back to the hallway. Fred handed the football to Mary.",
        );
        assert_eq!(facts.len(), 12);
        assert_eq!(oracle_answer(TaskId::Qa5, &facts, "What did Bill give to Fred?").unwrap(), "apple");
        assert_eq!(oracle_answer(TaskId::Qa5, &facts, "Who received the football?").unwrap(), "Mary");
        assert_eq!(supporting_facts(TaskId::Qa5, &facts, "What did Bill give to Fred?").unwrap(), vec![8]);
    }

    #[test]
    fn unknown_location_is_unanswerable() {
        let r = oracle_answer(TaskId::Qa2, &["Mary grabbed the milk there."], "Where is the milk?");
        assert!(matches!(r, Err(Error::Unanswerable(_))));
    }

    #[test]
    fn garbage_fact_is_rejected() {
        assert!(matches!(parse_fact("The cat sat."), Err(Error::UnparsableFact(_))));
    }

    #[test]
    fn ambiguous_relation_is_unanswerable() {
        let facts = ["The garden is north of the office.", "The kitchen is north of the office."];
        assert!(oracle_answer(TaskId::Qa4, &facts, "What is north of the office?").is_err());
    }
}
