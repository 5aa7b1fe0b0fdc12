//! Parser for the community `.pomdp` model format.
//!
//! The format has a preamble (`discount:`, `values:`, `states:`, `actions:`,
//! `observations:`), an optional `start:` belief, and then `T:`/`O:`/`R:`
//! entries in scalar, row, or matrix form with `*` wildcards and the
//! `uniform`/`identity` keywords. Unspecified probability entries default to
//! zero and are caught by model validation if a row stays unnormalized.
//! `values: cost` negates rewards so the solvers always maximize. Rewards
//! over (action, state, next state, observation) are collapsed to r(s,a) by
//! expectation under T and O once all tables are read.

use std::fmt;

use pomdp_core::{Belief, PomdpModel};

#[derive(Debug)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

/// Which objective convention the file used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueConvention {
    Reward,
    Cost,
}

impl ValueConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            ValueConvention::Reward => "reward",
            ValueConvention::Cost => "cost",
        }
    }
}

/// A parsed and validated problem file.
#[derive(Debug)]
pub struct PomdpFile {
    pub model: PomdpModel,
    /// `start:` belief; defaults to uniform when the file has none.
    pub start: Belief,
    pub values: ValueConvention,
}

struct Token {
    text: String,
    line: usize,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    for (index, raw_line) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw_line.split('#').next().unwrap_or("");
        let mut word = String::new();
        for ch in content.chars() {
            if ch == ':' {
                if !word.is_empty() {
                    tokens.push(Token { text: std::mem::take(&mut word), line });
                }
                tokens.push(Token { text: ":".to_string(), line });
            } else if ch.is_whitespace() {
                if !word.is_empty() {
                    tokens.push(Token { text: std::mem::take(&mut word), line });
                }
            } else {
                word.push(ch);
            }
        }
        if !word.is_empty() {
            tokens.push(Token { text: word, line });
        }
    }
    tokens
}

struct Parser {
    tokens: Vec<Token>,
    position: usize,
}

/// Entity names or a bare count.
enum EntitySet {
    Count(usize),
    Names(Vec<String>),
}

impl EntitySet {
    fn into_names(self, prefix: &str) -> Vec<String> {
        match self {
            EntitySet::Count(n) => (0..n).map(|i| format!("{prefix}{i}")).collect(),
            EntitySet::Names(names) => names,
        }
    }
}

/// A field that may be a name, an index, or the `*` wildcard.
enum FieldRef {
    All,
    One(usize),
}

impl FieldRef {
    fn expand(&self, n: usize) -> Vec<usize> {
        match self {
            FieldRef::All => (0..n).collect(),
            FieldRef::One(i) => vec![*i],
        }
    }
}

impl Parser {
    fn error<T>(&self, line: usize, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { line, message: message.into() })
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.position)
    }

    fn last_line(&self) -> usize {
        self.tokens.last().map_or(1, |t| t.line)
    }

    fn next(&mut self, expectation: &str) -> Result<&Token, ParseError> {
        match self.tokens.get(self.position) {
            Some(_) => {
                self.position += 1;
                Ok(&self.tokens[self.position - 1])
            }
            None => Err(ParseError {
                line: self.last_line(),
                message: format!("unexpected end of file, expected {expectation}"),
            }),
        }
    }

    fn expect_colon(&mut self) -> Result<(), ParseError> {
        let token = self.next("':'")?;
        if token.text != ":" {
            let (line, text) = (token.line, token.text.clone());
            return self.error(line, format!("expected ':', found '{text}'"));
        }
        Ok(())
    }

    fn eat_colon(&mut self) -> bool {
        if self.peek().is_some_and(|t| t.text == ":") {
            self.position += 1;
            true
        } else {
            false
        }
    }

    fn number(&mut self, what: &str) -> Result<f64, ParseError> {
        let token = self.next(what)?;
        let (line, text) = (token.line, token.text.clone());
        text.parse::<f64>()
            .map_err(|_| ParseError { line, message: format!("expected {what}, found '{text}'") })
    }

    /// Names (or a count) listed on the same line as the keyword.
    fn entity_set(&mut self, keyword_line: usize, what: &str) -> Result<EntitySet, ParseError> {
        let mut names = Vec::new();
        while self
            .peek()
            .is_some_and(|t| t.line == keyword_line && t.text != ":")
        {
            names.push(self.next("a name")?.text.clone());
        }
        if names.is_empty() {
            return self.error(keyword_line, format!("{what} list is empty"));
        }
        if names.len() == 1 {
            if let Ok(count) = names[0].parse::<usize>() {
                if count == 0 {
                    return self.error(keyword_line, format!("{what} count must be positive"));
                }
                return Ok(EntitySet::Count(count));
            }
        }
        Ok(EntitySet::Names(names))
    }

    /// Resolves a name, index, or `*` against an entity list.
    fn field(&mut self, names: &[String], what: &str) -> Result<FieldRef, ParseError> {
        let token = self.next(what)?;
        let (line, text) = (token.line, token.text.clone());
        if text == "*" {
            return Ok(FieldRef::All);
        }
        if let Some(index) = names.iter().position(|n| n == &text) {
            return Ok(FieldRef::One(index));
        }
        if let Ok(index) = text.parse::<usize>() {
            if index < names.len() {
                return Ok(FieldRef::One(index));
            }
        }
        self.error(line, format!("unknown {what} '{text}'"))
    }
}

struct Preamble {
    discount: Option<f64>,
    values: Option<ValueConvention>,
    states: Option<Vec<String>>,
    actions: Option<Vec<String>>,
    observations: Option<Vec<String>>,
}

enum StartSpec {
    Uniform,
    Probs(Vec<f64>),
    State(String),
}

/// Parses `.pomdp` text into a validated model plus its start belief.
pub fn parse_pomdp_file(text: &str) -> Result<PomdpFile, ParseError> {
    let mut parser = Parser { tokens: tokenize(text), position: 0 };
    let mut preamble = Preamble {
        discount: None,
        values: None,
        states: None,
        actions: None,
        observations: None,
    };
    let mut start: Option<StartSpec> = None;

    // Tables are filled once the preamble fixes the dimensions.
    let mut transition: Option<Vec<f64>> = None;
    let mut observation: Option<Vec<f64>> = None;
    let mut reward4: Option<Vec<f64>> = None;

    while let Some(token) = parser.peek() {
        let line = token.line;
        let keyword = token.text.clone();
        parser.position += 1;
        match keyword.as_str() {
            "discount" => {
                parser.expect_colon()?;
                preamble.discount = Some(parser.number("a discount factor")?);
            }
            "values" => {
                parser.expect_colon()?;
                let token = parser.next("'reward' or 'cost'")?;
                let (line, text) = (token.line, token.text.clone());
                preamble.values = Some(match text.as_str() {
                    "reward" | "rewards" => ValueConvention::Reward,
                    "cost" | "costs" => ValueConvention::Cost,
                    _ => {
                        return parser
                            .error(line, format!("expected 'reward' or 'cost', found '{text}'"))
                    }
                });
            }
            "states" => {
                parser.expect_colon()?;
                preamble.states = Some(parser.entity_set(line, "state")?.into_names("s"));
            }
            "actions" => {
                parser.expect_colon()?;
                preamble.actions = Some(parser.entity_set(line, "action")?.into_names("a"));
            }
            "observations" => {
                parser.expect_colon()?;
                preamble.observations =
                    Some(parser.entity_set(line, "observation")?.into_names("z"));
            }
            "start" => {
                // `start include:` / `start exclude:` are a rarer dialect;
                // reject them loudly rather than guessing semantics.
                if let Some(next) = parser.peek() {
                    if next.text == "include" || next.text == "exclude" {
                        return parser.error(
                            line,
                            format!("'start {}:' is not supported; list explicit probabilities", next.text),
                        );
                    }
                }
                parser.expect_colon()?;
                let first = parser.next("a start belief")?;
                let (first_line, first_text) = (first.line, first.text.clone());
                if first_text == "uniform" {
                    start = Some(StartSpec::Uniform);
                } else if first_text.parse::<f64>().is_ok() {
                    let mut probs = vec![first_text.parse::<f64>().unwrap()];
                    while parser
                        .peek()
                        .is_some_and(|t| t.text.parse::<f64>().is_ok() && t.text != ":")
                    {
                        probs.push(parser.number("a probability")?);
                    }
                    start = Some(StartSpec::Probs(probs));
                } else {
                    let _ = first_line;
                    start = Some(StartSpec::State(first_text));
                }
            }
            "T" | "O" | "R" => {
                let states = preamble.states.as_ref().ok_or(ParseError {
                    line,
                    message: "table entry before 'states:' declaration".into(),
                })?;
                let actions = preamble.actions.as_ref().ok_or(ParseError {
                    line,
                    message: "table entry before 'actions:' declaration".into(),
                })?;
                let observations = preamble.observations.as_ref().ok_or(ParseError {
                    line,
                    message: "table entry before 'observations:' declaration".into(),
                })?;
                let (ns, na, nz) = (states.len(), actions.len(), observations.len());
                let transition = transition.get_or_insert_with(|| vec![0.0; na * ns * ns]);
                let observation = observation.get_or_insert_with(|| vec![0.0; na * ns * nz]);
                let reward4 = reward4.get_or_insert_with(|| vec![0.0; na * ns * ns * nz]);

                parser.expect_colon()?;
                let action = parser.field(actions, "action")?;
                match keyword.as_str() {
                    "T" => parse_t_entry(&mut parser, line, action, states, transition, ns, na)?,
                    "O" => parse_o_entry(
                        &mut parser,
                        line,
                        action,
                        states,
                        observations,
                        observation,
                        ns,
                        na,
                        nz,
                    )?,
                    _ => parse_r_entry(
                        &mut parser,
                        line,
                        action,
                        states,
                        observations,
                        reward4,
                        ns,
                        na,
                        nz,
                    )?,
                }
            }
            other => {
                return parser.error(line, format!("unexpected token '{other}'"));
            }
        }
    }

    let last = parser.last_line();
    let missing = |what: &str| ParseError { line: last, message: format!("missing '{what}:' declaration") };
    let discount = preamble.discount.ok_or_else(|| missing("discount"))?;
    let values = preamble.values.ok_or_else(|| missing("values"))?;
    let states = preamble.states.ok_or_else(|| missing("states"))?;
    let actions = preamble.actions.ok_or_else(|| missing("actions"))?;
    let observations = preamble.observations.ok_or_else(|| missing("observations"))?;
    let (ns, na, nz) = (states.len(), actions.len(), observations.len());
    let transition = transition.unwrap_or_else(|| vec![0.0; na * ns * ns]);
    let observation = observation.unwrap_or_else(|| vec![0.0; na * ns * nz]);
    let reward4 = reward4.unwrap_or_else(|| vec![0.0; na * ns * ns * nz]);

    // Collapse R(a,s,s',z) to r(s,a) by expectation, then apply the value
    // convention so the solvers always maximize.
    let sign = match values {
        ValueConvention::Reward => 1.0,
        ValueConvention::Cost => -1.0,
    };
    let mut reward = vec![0.0; ns * na];
    for a in 0..na {
        for s in 0..ns {
            let mut total = 0.0;
            for s_next in 0..ns {
                let p_transition = transition[(a * ns + s) * ns + s_next];
                if p_transition == 0.0 {
                    continue;
                }
                for z in 0..nz {
                    let p_obs = observation[(a * ns + s_next) * nz + z];
                    if p_obs == 0.0 {
                        continue;
                    }
                    total += p_transition * p_obs * reward4[((a * ns + s) * ns + s_next) * nz + z];
                }
            }
            reward[s * na + a] = sign * total;
        }
    }

    let start_belief = match start {
        None => Belief::uniform(ns),
        Some(StartSpec::Uniform) => Belief::uniform(ns),
        Some(StartSpec::Probs(probs)) => {
            if probs.len() != ns {
                return Err(ParseError {
                    line: last,
                    message: format!("start belief has {} entries for {ns} states", probs.len()),
                });
            }
            Belief::normalized(probs).map_err(|e| ParseError {
                line: last,
                message: format!("invalid start belief: {e}"),
            })?
        }
        Some(StartSpec::State(name)) => {
            let index = states.iter().position(|s| s == &name).ok_or(ParseError {
                line: last,
                message: format!("unknown start state '{name}'"),
            })?;
            Belief::unit(ns, index)
        }
    };

    let model = PomdpModel::new(
        states,
        actions,
        observations,
        transition,
        observation,
        reward,
        discount,
    )
    .map_err(|e| ParseError { line: last, message: e.to_string() })?;

    Ok(PomdpFile { model, start: start_belief, values })
}

#[allow(clippy::too_many_arguments)]
fn parse_t_entry(
    parser: &mut Parser,
    line: usize,
    action: FieldRef,
    states: &[String],
    transition: &mut [f64],
    ns: usize,
    na: usize,
) -> Result<(), ParseError> {
    if parser.eat_colon() {
        let from = parser.field(states, "state")?;
        if parser.eat_colon() {
            // T: a : s : s' p
            let to = parser.field(states, "state")?;
            let p = parser.number("a probability")?;
            for a in action.expand(na) {
                for s in from.expand(ns) {
                    for s2 in to.expand(ns) {
                        transition[(a * ns + s) * ns + s2] = p;
                    }
                }
            }
        } else {
            // T: a : s  followed by a row over end states.
            let row = parse_row(parser, line, ns)?;
            for a in action.expand(na) {
                for s in from.expand(ns) {
                    for (s2, &p) in row.iter().enumerate() {
                        transition[(a * ns + s) * ns + s2] = p;
                    }
                }
            }
        }
    } else {
        // T: a  followed by a matrix, `uniform`, or `identity`.
        let matrix = parse_matrix(parser, line, ns, ns, true)?;
        for a in action.expand(na) {
            for s in 0..ns {
                for s2 in 0..ns {
                    transition[(a * ns + s) * ns + s2] = matrix[s][s2];
                }
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn parse_o_entry(
    parser: &mut Parser,
    line: usize,
    action: FieldRef,
    states: &[String],
    observations: &[String],
    observation: &mut [f64],
    ns: usize,
    na: usize,
    nz: usize,
) -> Result<(), ParseError> {
    if parser.eat_colon() {
        let end = parser.field(states, "state")?;
        if parser.eat_colon() {
            // O: a : s' : z p
            let z = parser.field(observations, "observation")?;
            let p = parser.number("a probability")?;
            for a in action.expand(na) {
                for s2 in end.expand(ns) {
                    for zi in z.expand(nz) {
                        observation[(a * ns + s2) * nz + zi] = p;
                    }
                }
            }
        } else {
            // O: a : s'  followed by a row over observations.
            let row = parse_row(parser, line, nz)?;
            for a in action.expand(na) {
                for s2 in end.expand(ns) {
                    for (zi, &p) in row.iter().enumerate() {
                        observation[(a * ns + s2) * nz + zi] = p;
                    }
                }
            }
        }
    } else {
        // O: a  followed by an |S| x |Z| matrix, `uniform`, or `identity`.
        let matrix = parse_matrix(parser, line, ns, nz, ns == nz)?;
        for a in action.expand(na) {
            for s2 in 0..ns {
                for zi in 0..nz {
                    observation[(a * ns + s2) * nz + zi] = matrix[s2][zi];
                }
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn parse_r_entry(
    parser: &mut Parser,
    line: usize,
    action: FieldRef,
    states: &[String],
    observations: &[String],
    reward4: &mut [f64],
    ns: usize,
    na: usize,
    nz: usize,
) -> Result<(), ParseError> {
    parser.expect_colon()?;
    let from = parser.field(states, "state")?;
    if !parser.eat_colon() {
        return parser.error(
            line,
            "reward entries need at least 'R: action : state : next-state'",
        );
    }
    let to = parser.field(states, "state")?;
    let na_expand = action.expand(na);
    if parser.eat_colon() {
        // R: a : s : s' : z value
        let z = parser.field(observations, "observation")?;
        let value = parser.number("a reward")?;
        for &a in &na_expand {
            for s in from.expand(ns) {
                for s2 in to.expand(ns) {
                    for zi in z.expand(nz) {
                        reward4[((a * ns + s) * ns + s2) * nz + zi] = value;
                    }
                }
            }
        }
    } else {
        // R: a : s : s'  followed by a row over observations.
        let row = parse_row(parser, line, nz)?;
        for &a in &na_expand {
            for s in from.expand(ns) {
                for s2 in to.expand(ns) {
                    for (zi, &value) in row.iter().enumerate() {
                        reward4[((a * ns + s) * ns + s2) * nz + zi] = value;
                    }
                }
            }
        }
    }
    Ok(())
}

fn parse_row(parser: &mut Parser, line: usize, n: usize) -> Result<Vec<f64>, ParseError> {
    if parser.peek().is_some_and(|t| t.text == "uniform") {
        parser.position += 1;
        return Ok(vec![1.0 / n as f64; n]);
    }
    let _ = line;
    (0..n).map(|_| parser.number("a probability")).collect()
}

fn parse_matrix(
    parser: &mut Parser,
    line: usize,
    rows: usize,
    cols: usize,
    identity_allowed: bool,
) -> Result<Vec<Vec<f64>>, ParseError> {
    if let Some(token) = parser.peek() {
        if token.text == "uniform" {
            parser.position += 1;
            return Ok(vec![vec![1.0 / cols as f64; cols]; rows]);
        }
        if token.text == "identity" {
            let token_line = token.line;
            parser.position += 1;
            if !identity_allowed {
                return parser.error(token_line, "'identity' needs a square table");
            }
            return Ok((0..rows)
                .map(|r| (0..cols).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
                .collect());
        }
    }
    (0..rows).map(|_| parse_row(parser, line, cols)).collect()
}
