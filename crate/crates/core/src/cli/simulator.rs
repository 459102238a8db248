//! External simulators driven over a line protocol on stdin/stdout.
//!
//! ```text
//! -> HELLO d p          <- READY
//! -> EVAL x1 .. xd t1 .. tp
//! <- OK v | ERR message
//! ```
//!
//! Each lane is one child process with at most one outstanding request.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::model::{Model, ModelError};

struct Lane {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Lane {
    fn spawn(command: &[String], d: usize, p: usize) -> Result<Self, ModelError> {
        let (prog, args) = command
            .split_first()
            .ok_or_else(|| ModelError::Process("empty simulator command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ModelError::Process(format!("cannot start {prog:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut lane = Lane { child, stdin, stdout };
        let reply = lane.request(&format!("HELLO {d} {p}"))?;
        if reply != "READY" {
            return Err(ModelError::Protocol { line: reply });
        }
        Ok(lane)
    }

    fn request(&mut self, line: &str) -> Result<String, ModelError> {
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| ModelError::Process(format!("write failed after {line:?}: {e}")))?;
        let mut reply = String::new();
        let read = self
            .stdout
            .read_line(&mut reply)
            .map_err(|e| ModelError::Process(format!("read failed after {line:?}: {e}")))?;
        if read == 0 {
            let status = self.child.try_wait().ok().flatten();
            return Err(ModelError::Process(match status {
                Some(s) => format!("simulator exited ({s}) while answering {line:?}"),
                None => format!("simulator closed its output while answering {line:?}"),
            }));
        }
        Ok(reply.trim_end_matches(['\n', '\r']).to_string())
    }
}

impl Drop for Lane {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// `y^s` provided by child processes.
pub struct ExternalModel {
    lanes: Vec<Mutex<Lane>>,
    next: AtomicUsize,
    dim_x: usize,
    dim_theta: usize,
    stateless: bool,
    label: String,
}

impl ExternalModel {
    /// Starts `lanes` children and performs the handshake with each.
    /// More than one lane is only used for stateless simulators.
    pub fn spawn(command: &[String], dim_x: usize, dim_theta: usize, lanes: usize, stateless: bool) -> Result<Self, ModelError> {
        let count = if stateless { lanes.max(1) } else { 1 };
        let lanes = (0..count)
            .map(|_| Lane::spawn(command, dim_x, dim_theta).map(Mutex::new))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ExternalModel {
            lanes,
            next: AtomicUsize::new(0),
            dim_x,
            dim_theta,
            stateless,
            label: command.join(" "),
        })
    }

    pub fn lanes(&self) -> usize {
        self.lanes.len()
    }
}

/// Parses an `OK v` / `ERR message` reply.
pub fn parse_reply(line: &str) -> Result<f64, ModelError> {
    if let Some(rest) = line.strip_prefix("OK ") {
        let v: f64 = rest.trim().parse().map_err(|_| ModelError::Protocol { line: line.to_string() })?;
        return Ok(v);
    }
    if let Some(msg) = line.strip_prefix("ERR") {
        return Err(ModelError::Simulator(msg.trim().to_string()));
    }
    Err(ModelError::Protocol { line: line.to_string() })
}

/// `EVAL x.. theta..` with 17 significant digits per value.
pub fn eval_request(x: &[f64], theta: &[f64]) -> String {
    let mut s = String::from("EVAL");
    for v in x.iter().chain(theta) {
        s.push(' ');
        s.push_str(&format!("{v:.16e}"));
    }
    s
}

impl Model for ExternalModel {
    fn eval(&self, x: &[f64], theta: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.dim_x || theta.len() != self.dim_theta {
            return Err(ModelError::Other(format!(
                "simulator expects {} inputs and {} parameters, got {} and {}",
                self.dim_x,
                self.dim_theta,
                x.len(),
                theta.len()
            )));
        }
        let i = self.next.fetch_add(1, Ordering::Relaxed) % self.lanes.len();
        let mut lane = self.lanes[i].lock().map_err(|_| ModelError::Process("simulator lane poisoned".into()))?;
        let v = parse_reply(&lane.request(&eval_request(x, theta))?)?;
        if !v.is_finite() {
            return Err(ModelError::NonFinite {
                x: x.to_vec(),
                theta: theta.to_vec(),
            });
        }
        Ok(v)
    }

    fn concurrency_safe(&self) -> bool {
        self.stateless && self.lanes.len() > 1
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

/// The reference simulator: answers `theta . x` (or `theta * sum x` for a scalar
/// parameter). With `fail` set, every evaluation is refused with that message;
/// with `exit_after`, the process quits after that many evaluations.
pub fn echo_simulator<R: BufRead, W: Write>(input: R, mut output: W, fail: Option<&str>, exit_after: Option<usize>) -> std::io::Result<()> {
    let mut dims: Option<(usize, usize)> = None;
    let mut served = 0usize;
    for line in input.lines() {
        let line = line?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("HELLO") => {
                let nums: Vec<usize> = parts.filter_map(|t| t.parse().ok()).collect();
                if nums.len() == 2 && (nums[1] == nums[0] || nums[1] == 1) {
                    dims = Some((nums[0], nums[1]));
                    writeln!(output, "READY")?;
                } else {
                    writeln!(output, "ERR unsupported dimensions {line:?}")?;
                }
            }
            Some("EVAL") => {
                if exit_after.is_some_and(|m| served >= m) {
                    return Ok(());
                }
                served += 1;
                let vals: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
                match (fail, dims, vals) {
                    (Some(msg), _, _) => writeln!(output, "ERR {msg}")?,
                    (None, None, _) => writeln!(output, "ERR no handshake")?,
                    (None, _, Err(_)) => writeln!(output, "ERR unparsable request")?,
                    (None, Some((d, p)), Ok(v)) if v.len() == d + p => {
                        let (x, t) = v.split_at(d);
                        let y: f64 = if p == d {
                            x.iter().zip(t).map(|(a, b)| a * b).sum()
                        } else {
                            t[0] * x.iter().sum::<f64>()
                        };
                        writeln!(output, "OK {y:.16e}")?;
                    }
                    (None, Some((d, p)), Ok(v)) => writeln!(output, "ERR expected {} values, got {}", d + p, v.len())?,
                }
            }
            Some(other) => writeln!(output, "ERR unknown command {other}")?,
            None => continue,
        }
        output.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn talk(script: &str, fail: Option<&str>) -> Vec<String> {
        let mut out = Vec::new();
        echo_simulator(script.as_bytes(), &mut out, fail, None).unwrap();
        String::from_utf8(out).unwrap().lines().map(String::from).collect()
    }

    #[test]
    fn handshake_and_eval() {
        let lines = talk("HELLO 1 1\nEVAL 2.0 3.0\n", None);
        assert_eq!(lines[0], "READY");
        assert_eq!(parse_reply(&lines[1]).unwrap(), 6.0);
    }

    #[test]
    fn refusals_and_malformed_replies() {
        let lines = talk("HELLO 1 1\nEVAL 2.0 3.0\n", Some("domain"));
        assert_eq!(parse_reply(&lines[1]), Err(ModelError::Simulator("domain".into())));
        assert!(matches!(parse_reply("OK nope"), Err(ModelError::Protocol { .. })));
        assert!(matches!(parse_reply("42"), Err(ModelError::Protocol { .. })));
    }

    #[test]
    fn request_values_round_trip() {
        let x = [0.1, 1.0 / 3.0];
        let t = [-7.25e-9];
        let req = eval_request(&x, &t);
        let back: Vec<f64> = req.split_whitespace().skip(1).map(|s| s.parse().unwrap()).collect();
        assert_eq!(back, vec![0.1, 1.0 / 3.0, -7.25e-9]);
    }
}
