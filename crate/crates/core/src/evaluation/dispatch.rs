use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::thread;

use super::{EvaluationRequest, Evaluator};
use crate::error::{Error, Result};
use crate::metrics::EvaluationResult;

/// A fixed set of evaluation slots that can run concurrently.
pub struct EvaluatorPool {
    slots: Vec<Box<dyn Evaluator>>,
}

impl EvaluatorPool {
    pub fn new(slots: Vec<Box<dyn Evaluator>>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::Config("evaluator pool needs at least one slot".into()));
        }
        Ok(EvaluatorPool { slots })
    }

    /// `size` clones of a cloneable evaluator.
    pub fn replicated<E: Evaluator + Clone + 'static>(evaluator: E, size: usize) -> Result<Self> {
        Self::new(
            (0..size)
                .map(|_| Box::new(evaluator.clone()) as Box<dyn Evaluator>)
                .collect(),
        )
    }

    pub fn size(&self) -> usize {
        self.slots.len()
    }
}

struct Queue {
    pending: VecDeque<usize>,
    in_flight: usize,
    last_failure: Option<String>,
}

/// Evaluates every request, up to pool-size at a time, and returns results in
/// request order. A slot that becomes unavailable hands its request back to
/// the queue; the call fails only when every slot is gone with work left.
pub fn dispatch(requests: &[EvaluationRequest], pool: &mut EvaluatorPool) -> Result<Vec<EvaluationResult>> {
    if requests.is_empty() {
        return Ok(Vec::new());
    }
    if pool.slots.len() == 1 {
        return dispatch_serial(requests, &mut pool.slots[0]);
    }
    let queue = Mutex::new(Queue {
        pending: (0..requests.len()).collect(),
        in_flight: 0,
        last_failure: None,
    });
    let wake = Condvar::new();
    let results: Mutex<Vec<Option<EvaluationResult>>> = Mutex::new(vec![None; requests.len()]);

    thread::scope(|scope| {
        for slot in pool.slots.iter_mut() {
            let (queue, wake, results) = (&queue, &wake, &results);
            scope.spawn(move || loop {
                let index = {
                    let mut q = queue.lock().expect("queue lock");
                    loop {
                        if let Some(i) = q.pending.pop_front() {
                            q.in_flight += 1;
                            break Some(i);
                        }
                        if q.in_flight == 0 {
                            break None;
                        }
                        // Work may still be handed back by a failing slot.
                        q = wake.wait(q).expect("queue lock");
                    }
                };
                let Some(index) = index else {
                    wake.notify_all();
                    return;
                };
                let outcome = slot.evaluate(&requests[index]);
                let mut q = queue.lock().expect("queue lock");
                q.in_flight -= 1;
                match outcome {
                    Ok(result) => {
                        results.lock().expect("results lock")[index] = Some(result);
                        drop(q);
                        wake.notify_all();
                    }
                    Err(unavailable) => {
                        q.pending.push_front(index);
                        q.last_failure = Some(unavailable.0);
                        drop(q);
                        wake.notify_all();
                        return;
                    }
                }
            });
        }
    });

    let last_failure = queue.into_inner().expect("queue lock").last_failure;
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| {
            r.ok_or_else(|| {
                Error::PoolExhausted(last_failure.clone().unwrap_or_else(|| "no slot could evaluate".into()))
            })
        })
        .collect()
}

fn dispatch_serial(requests: &[EvaluationRequest], slot: &mut Box<dyn Evaluator>) -> Result<Vec<EvaluationResult>> {
    requests
        .iter()
        .map(|r| slot.evaluate(r).map_err(|e| Error::PoolExhausted(e.0)))
        .collect()
}
