//! Trajectory CSV.
//!
//! ```text
//! # frame=rescaled eps=0.001
//! # atom time=0.5 u:x1=0.25 j:x1->x2=0.25
//! time,u:<node>...,j:<edge>...[,jint:<edge>...]
//! ```
//!
//! `jint` on row `k > 0` is the flux integral over `[t_{k−1}, t_k]`; the first
//! row holds 0.

use std::fs;
use std::path::Path;

use super::{Atom, Frame, Trajectory};
use crate::error::{Error, Result};
use crate::netmodel::Network;

fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| config(format!("invalid number `{s}` in {what}")))
}

pub fn trajectory_to_csv(net: &Network, traj: &Trajectory) -> Result<String> {
    let mut head = match traj.frame.eps() {
        Some(e) => format!("# frame={} eps={e}\n", traj.frame.name()),
        None => format!("# frame={}\n", traj.frame.name()),
    };
    for a in &traj.atoms {
        head.push_str(&format!("# atom time={}", a.time));
        for (x, v) in a.density.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            head.push_str(&format!(" u:{}={v}", net.nodes()[x]));
        }
        for (r, v) in a.flux.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            head.push_str(&format!(" j:{}={v}", net.edge_label(r)));
        }
        head.push('\n');
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut cols = vec!["time".to_string()];
    cols.extend(net.nodes().iter().map(|x| format!("u:{x}")));
    cols.extend((0..net.edge_count()).map(|r| format!("j:{}", net.edge_label(r))));
    if traj.interval_flux.is_some() {
        cols.extend((0..net.edge_count()).map(|r| format!("jint:{}", net.edge_label(r))));
    }
    w.write_record(&cols)?;
    for k in 0..traj.grid.len() {
        let mut row = vec![traj.grid[k].to_string()];
        row.extend(traj.density[k].iter().map(f64::to_string));
        row.extend(traj.flux[k].iter().map(f64::to_string));
        if let Some(int) = &traj.interval_flux {
            if k == 0 {
                row.extend(std::iter::repeat_n("0".to_string(), net.edge_count()));
            } else {
                row.extend(int[k - 1].iter().map(f64::to_string));
            }
        }
        w.write_record(&row)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| config(e.to_string()))?)
        .map_err(|e| config(e.to_string()))?;
    Ok(head + &body)
}

fn parse_frame(line: &str) -> Result<Frame> {
    let mut frame = None;
    let mut eps = None;
    for tok in line.split_whitespace() {
        match tok.split_once('=') {
            Some(("frame", f)) => frame = Some(f.to_string()),
            Some(("eps", e)) => eps = Some(parse_f64(e, "frame header")?),
            _ => {}
        }
    }
    let need_eps = || eps.ok_or_else(|| config("frame header lacks eps"));
    match frame.as_deref() {
        Some("raw") => Ok(Frame::Raw { eps: need_eps()? }),
        Some("rescaled") => Ok(Frame::Rescaled { eps: need_eps()? }),
        Some("limit") => Ok(Frame::Limit),
        other => Err(config(format!("unknown frame {other:?}"))),
    }
}

fn parse_atom(net: &Network, line: &str) -> Result<Atom> {
    let mut atom = Atom {
        time: f64::NAN,
        density: vec![0.0; net.node_count()],
        flux: vec![0.0; net.edge_count()],
    };
    for tok in line.split_whitespace().skip(1) {
        let (key, val) = tok
            .rsplit_once('=')
            .ok_or_else(|| config(format!("malformed atom entry `{tok}`")))?;
        let v = parse_f64(val, "atom")?;
        if key == "time" {
            atom.time = v;
        } else if let Some(id) = key.strip_prefix("u:") {
            let x = net.node_index(id).ok_or_else(|| Error::UnknownNode(id.into()))?;
            atom.density[x] = v;
        } else if let Some(label) = key.strip_prefix("j:") {
            let r = net
                .edge_index(label)
                .ok_or_else(|| config(format!("unknown edge `{label}`")))?;
            atom.flux[r] = v;
        } else {
            return Err(config(format!("unknown atom key `{key}`")));
        }
    }
    if atom.time.is_nan() {
        return Err(config("atom without time"));
    }
    Ok(atom)
}

pub fn trajectory_from_csv(net: &Network, text: &str) -> Result<Trajectory> {
    let mut frame = None;
    let mut atoms = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(c) = line.strip_prefix('#') {
            let c = c.trim();
            if c.starts_with("frame=") {
                frame = Some(parse_frame(c)?);
            } else if c.starts_with("atom") {
                atoms.push(parse_atom(net, c)?);
            }
        } else if !line.trim().is_empty() {
            body.push_str(line);
            body.push('\n');
        }
    }
    let frame = frame.ok_or_else(|| config("missing `# frame=` header"))?;
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let time_col = col("time").ok_or_else(|| config("missing time column"))?;
    let u_cols = net
        .nodes()
        .iter()
        .map(|x| col(&format!("u:{x}")).ok_or_else(|| config(format!("missing column u:{x}"))))
        .collect::<Result<Vec<_>>>()?;
    let j_cols = (0..net.edge_count())
        .map(|r| {
            let l = net.edge_label(r);
            col(&format!("j:{l}")).ok_or_else(|| config(format!("missing column j:{l}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let jint_cols: Vec<Option<usize>> = (0..net.edge_count())
        .map(|r| col(&format!("jint:{}", net.edge_label(r))))
        .collect();
    let has_jint = jint_cols.iter().all(Option::is_some) && net.edge_count() > 0;
    let (mut grid, mut density, mut flux, mut interval) = (vec![], vec![], vec![], vec![]);
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |c: usize| parse_f64(rec.get(c).unwrap_or(""), "trajectory row");
        grid.push(get(time_col)?);
        density.push(u_cols.iter().map(|&c| get(c)).collect::<Result<Vec<_>>>()?);
        flux.push(j_cols.iter().map(|&c| get(c)).collect::<Result<Vec<_>>>()?);
        if has_jint && k > 0 {
            interval.push(jint_cols.iter().map(|c| get(c.unwrap())).collect::<Result<Vec<_>>>()?);
        }
    }
    let mut traj = Trajectory::new(frame, grid, density, flux)?;
    if has_jint {
        traj.interval_flux = Some(interval);
    }
    traj.atoms = atoms;
    traj.validate()?;
    Ok(traj)
}

pub fn write_trajectory(net: &Network, traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, trajectory_to_csv(net, traj)?)?;
    Ok(())
}

pub fn read_trajectory(net: &Network, path: impl AsRef<Path>) -> Result<Trajectory> {
    trajectory_from_csv(net, &fs::read_to_string(path)?)
}
