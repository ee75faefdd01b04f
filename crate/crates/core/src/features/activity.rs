use crate::data::{EventKind, EventLog, Timestamp};

/// Per-user sorted login and pay timestamps, for window counting by
/// binary search.
#[derive(Debug, Clone)]
pub struct ActivityIndex<'a> {
    log: &'a EventLog,
    login_offsets: Vec<usize>,
    logins: Vec<Timestamp>,
    pay_offsets: Vec<usize>,
    pays: Vec<(Timestamp, f64)>,
}

/// Counts over one half-open window.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WindowStats {
    pub logins: usize,
    pub pays: usize,
    pub pay_amount: f64,
}

impl<'a> ActivityIndex<'a> {
    pub fn new(log: &'a EventLog) -> Self {
        let n = log.users().len();
        let mut login_counts = vec![0usize; n];
        let mut pay_counts = vec![0usize; n];
        for e in log.events() {
            match e.kind {
                EventKind::Login => login_counts[e.user as usize] += 1,
                EventKind::Pay { .. } => pay_counts[e.user as usize] += 1,
            }
        }
        let login_offsets = prefix_offsets(&login_counts);
        let pay_offsets = prefix_offsets(&pay_counts);
        let mut logins = vec![0; login_offsets[n]];
        let mut pays = vec![(0, 0.0); pay_offsets[n]];
        let mut li = login_offsets.clone();
        let mut pi = pay_offsets.clone();
        // Events are time-sorted, so each user's slice comes out sorted.
        for e in log.events() {
            let u = e.user as usize;
            match e.kind {
                EventKind::Login => {
                    logins[li[u]] = e.ts;
                    li[u] += 1;
                }
                EventKind::Pay { amount } => {
                    pays[pi[u]] = (e.ts, amount);
                    pi[u] += 1;
                }
            }
        }
        Self {
            log,
            login_offsets,
            logins,
            pay_offsets,
            pays,
        }
    }

    pub fn log(&self) -> &'a EventLog {
        self.log
    }

    /// Sorted login timestamps of a user; empty for users without events.
    pub fn logins(&self, user_id: &str) -> &[Timestamp] {
        match self.log.user_index(user_id) {
            Some(u) => {
                let u = u as usize;
                &self.logins[self.login_offsets[u]..self.login_offsets[u + 1]]
            }
            None => &[],
        }
    }

    pub fn pays(&self, user_id: &str) -> &[(Timestamp, f64)] {
        match self.log.user_index(user_id) {
            Some(u) => {
                let u = u as usize;
                &self.pays[self.pay_offsets[u]..self.pay_offsets[u + 1]]
            }
            None => &[],
        }
    }

    pub fn count_logins(&self, user_id: &str, from: Timestamp, to: Timestamp) -> usize {
        let l = self.logins(user_id);
        l.partition_point(|&t| t < to) - l.partition_point(|&t| t < from)
    }

    pub fn any_login(&self, user_id: &str, from: Timestamp, to: Timestamp) -> bool {
        let l = self.logins(user_id);
        let i = l.partition_point(|&t| t < from);
        i < l.len() && l[i] < to
    }

    /// Latest login strictly before `t`.
    pub fn last_login_before(&self, user_id: &str, t: Timestamp) -> Option<Timestamp> {
        let l = self.logins(user_id);
        let i = l.partition_point(|&ts| ts < t);
        (i > 0).then(|| l[i - 1])
    }

    pub fn window(&self, user_id: &str, from: Timestamp, to: Timestamp) -> WindowStats {
        let p = self.pays(user_id);
        let lo = p.partition_point(|&(t, _)| t < from);
        let hi = p.partition_point(|&(t, _)| t < to);
        WindowStats {
            logins: self.count_logins(user_id, from, to),
            pays: hi - lo,
            pay_amount: p[lo..hi].iter().map(|&(_, a)| a).sum(),
        }
    }
}

fn prefix_offsets(counts: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(counts.len() + 1);
    let mut acc = 0;
    off.push(0);
    for &c in counts {
        acc += c;
        off.push(acc);
    }
    off
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{days, Horizon, RawEvent};

    #[test]
    fn window_counts_are_half_open() {
        let h = Horizon::new(0, days(5)).unwrap();
        let raw = vec![
            RawEvent {
                user_id: "a".into(),
                ts: 10,
                kind: EventKind::Login,
            },
            RawEvent {
                user_id: "a".into(),
                ts: 20,
                kind: EventKind::Login,
            },
            RawEvent {
                user_id: "a".into(),
                ts: 20,
                kind: EventKind::Pay { amount: 4.0 },
            },
            RawEvent {
                user_id: "b".into(),
                ts: 15,
                kind: EventKind::Login,
            },
        ];
        let log = EventLog::from_raw(h, raw).unwrap();
        let idx = ActivityIndex::new(&log);
        assert_eq!(idx.count_logins("a", 10, 20), 1);
        assert_eq!(idx.count_logins("a", 10, 21), 2);
        assert!(idx.any_login("b", 15, 16));
        assert!(!idx.any_login("b", 16, 100));
        assert_eq!(idx.last_login_before("a", 20), Some(10));
        assert_eq!(idx.last_login_before("a", 10), None);
        assert_eq!(idx.count_logins("zzz", 0, 100), 0);
        let w = idx.window("a", 0, 100);
        assert_eq!((w.logins, w.pays, w.pay_amount), (2, 1, 4.0));
    }
}
