use std::fmt;

use super::{Clause, Rule, RuleSet, HEAD_VAR};
use crate::attr::{is_plain_ident, Term};

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, atom) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{atom}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if is_plain_ident(&self.label) {
            f.write_str(&self.label)?;
        } else {
            write!(f, "{}", Term::sym(self.label.clone()))?;
        }
        write!(f, "({HEAD_VAR}) :- ")?;
        for (i, clause) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(" ; ")?;
            }
            write!(f, "{clause}")?;
        }
        f.write_str(".")
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rule in self.rules() {
            writeln!(f, "{rule}")?;
        }
        Ok(())
    }
}

pub fn print_rule(rule: &Rule) -> String {
    rule.to_string()
}

/// One rule per line, ordered by label.
pub fn print_ruleset(rules: &RuleSet) -> String {
    rules.to_string()
}
