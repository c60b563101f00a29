use serde::{Deserialize, Serialize};

/// A run of words from one sentence placed in a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub sent: usize,
    pub word_start: usize,
    pub word_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Window {
    pub segments: Vec<Segment>,
    /// Subword pieces in the window, excluding the two boundary markers.
    pub pieces: usize,
}

/// Greedy sentence packing of a document into encoder windows.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WindowPlan {
    pub windows: Vec<Window>,
    /// Pieces kept per word (less than the tokenizer output only for a single
    /// word longer than the whole budget).
    pub kept_pieces: Vec<Vec<usize>>,
}

impl WindowPlan {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Window index of every (sentence, word).
    pub fn assignment(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.kept_pieces.iter().map(|s| vec![usize::MAX; s.len()]).collect();
        for (w, win) in self.windows.iter().enumerate() {
            for seg in &win.segments {
                for slot in &mut out[seg.sent][seg.word_start..seg.word_end] {
                    *slot = w;
                }
            }
        }
        out
    }
}

/// Pack sentences in order; a sentence that does not fit the current window
/// starts the next one. `max_window` includes the two boundary markers. A
/// sentence longer than the whole budget is split at word boundaries, and a
/// single word longer than the budget keeps only its first pieces.
pub fn plan_windows(piece_counts: &[Vec<usize>], max_window: usize) -> WindowPlan {
    assert!(max_window > 2, "window budget must leave room for content");
    let budget = max_window - 2;
    let mut plan = WindowPlan { windows: Vec::new(), kept_pieces: piece_counts.to_vec() };
    let mut cur = Window::default();
    for (s, words) in piece_counts.iter().enumerate() {
        let total: usize = words.iter().sum();
        if words.is_empty() {
            continue;
        }
        if total <= budget {
            if cur.pieces + total > budget {
                plan.windows.push(std::mem::take(&mut cur));
            }
            cur.segments.push(Segment { sent: s, word_start: 0, word_end: words.len() });
            cur.pieces += total;
            continue;
        }
        log::warn!("sentence {s} has {total} subword pieces, over the window budget {budget}; splitting it");
        if !cur.segments.is_empty() {
            plan.windows.push(std::mem::take(&mut cur));
        }
        let mut start = 0;
        let mut used = 0;
        for (w, &n) in words.iter().enumerate() {
            let n = if n > budget {
                log::warn!("word {w} of sentence {s} has {n} pieces; keeping the first {budget}");
                plan.kept_pieces[s][w] = budget;
                budget
            } else {
                n
            };
            if used + n > budget {
                plan.windows.push(Window { segments: vec![Segment { sent: s, word_start: start, word_end: w }], pieces: used });
                start = w;
                used = 0;
            }
            used += n;
        }
        cur = Window { segments: vec![Segment { sent: s, word_start: start, word_end: words.len() }], pieces: used };
    }
    if !cur.segments.is_empty() {
        plan.windows.push(cur);
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_sentences_of_one_hundred_pieces() {
        let counts = vec![vec![1; 100]; 10];
        let plan = plan_windows(&counts, 512);
        assert_eq!(plan.len(), 2);
        assert_eq!(plan.windows[0].segments.len(), 5);
        assert_eq!(plan.windows[1].segments.len(), 5);
        assert_eq!(plan.windows[0].pieces, 500);
    }

    #[test]
    fn short_and_empty_documents() {
        assert_eq!(plan_windows(&[vec![1, 2, 1], vec![3]], 512).len(), 1);
        assert_eq!(plan_windows(&[], 512).len(), 0);
    }

    #[test]
    fn oversized_sentence_is_hard_split() {
        let plan = plan_windows(&[vec![2, 2], vec![1; 25], vec![3]], 12);
        // budget 10: [s0] then s1 in chunks of 10, 10, 5 and s2 (3) joins the tail
        assert_eq!(plan.len(), 4);
        assert_eq!(plan.windows[1].segments, vec![Segment { sent: 1, word_start: 0, word_end: 10 }]);
        assert_eq!(plan.windows[3].segments.len(), 2);
        for w in &plan.windows {
            assert!(w.pieces <= 10);
        }
    }

    #[test]
    fn giant_word_is_truncated() {
        let plan = plan_windows(&[vec![1, 50, 1]], 12);
        assert_eq!(plan.kept_pieces[0][1], 10);
        assert!(plan.windows.iter().all(|w| w.pieces <= 10));
    }

    proptest! {
        #[test]
        fn windows_partition_words_in_order(
            counts in proptest::collection::vec(proptest::collection::vec(1usize..6, 0..12), 0..15),
            max_window in 5usize..40,
        ) {
            let plan = plan_windows(&counts, max_window);
            let assign = plan.assignment();
            let mut last = 0;
            for (s, words) in assign.iter().enumerate() {
                prop_assert_eq!(words.len(), counts[s].len());
                for &w in words {
                    prop_assert!(w != usize::MAX, "word unassigned");
                    prop_assert!(w >= last, "order violated");
                    last = w;
                }
            }
            for (w, win) in plan.windows.iter().enumerate() {
                let pieces: usize = win.segments.iter()
                    .flat_map(|sg| plan.kept_pieces[sg.sent][sg.word_start..sg.word_end].iter())
                    .sum();
                prop_assert_eq!(pieces, win.pieces);
                prop_assert!(win.pieces <= max_window - 2, "window {} over budget", w);
                prop_assert!(!win.segments.is_empty());
            }
        }
    }
}
