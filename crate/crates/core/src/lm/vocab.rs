use std::collections::HashMap;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub const BOS_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const UNK_ID: u32 = 2;

/// Bijection between tokens and ids. The three markers always hold ids 0-2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Default for Vocab {
    fn default() -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for t in [BOS, EOS, UNK] {
            v.insert(t);
        }
        v
    }
}

impl Vocab {
    /// Builds a vocabulary from `tokens` in sorted order. Markers in the
    /// input are ignored.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut sorted: Vec<String> = tokens.into_iter().map(|t| t.as_ref().to_string()).collect();
        sorted.sort_unstable();
        sorted.dedup();
        let mut v = Vocab::default();
        for t in sorted {
            v.insert(&t);
        }
        v
    }

    /// Adds `token` if absent and returns its id.
    pub fn insert(&mut self, token: &str) -> u32 {
        if let Some(id) = self.ids.get(token) {
            return *id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.ids.insert(token.to_string(), id);
        id
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    /// Id of `token`, mapping unknown tokens and stray sentence markers to
    /// `<unk>`.
    pub fn id_or_unk(&self, token: &str) -> u32 {
        match self.ids.get(token) {
            Some(&id) if id != BOS_ID && id != EOS_ID => id,
            _ => UNK_ID,
        }
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Ids that can be predicted: everything except `<s>`.
    pub fn event_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.tokens.len() as u32).filter(|&id| id != BOS_ID)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> + '_ {
        self.tokens.iter().map(String::as_str)
    }

    /// `<s> w1 .. wn </s>` as ids.
    pub fn encode_padded<'a>(&self, tokens: impl Iterator<Item = &'a str>) -> Vec<u32> {
        let mut ids = vec![BOS_ID];
        ids.extend(tokens.map(|t| self.id_or_unk(t)));
        ids.push(EOS_ID);
        ids
    }
}
