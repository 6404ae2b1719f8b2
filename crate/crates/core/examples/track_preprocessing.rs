//! Reading a `time,x,y` track with a gap and an unobserved fix, filling the
//! time grid with missing rows and standardising the coordinates.

use stap_hmm::io::{parse_track, preprocess};

const TRACK: &str = "\
time,x,y
2024-05-01T06:00:00Z,512.0,230.0
2024-05-01T06:30:00Z,515.5,233.0
2024-05-01T07:00:00Z,,
2024-05-01T07:30:00Z,522.0,236.5
2024-05-01T09:00:00Z,530.0,250.0
2024-05-01T09:30:00Z,529.0,254.5
";

fn main() -> stap_hmm::Result<()> {
    let track = parse_track(TRACK.as_bytes())?;
    let pre = preprocess(&track, true)?;
    println!(
        "{} rows read, {} locations after filling {} gap rows; transform centre ({:.2}, {:.2}) scale {:.3}",
        track.rows.len(),
        pre.path.len(),
        pre.inserted,
        pre.transform.center.x,
        pre.transform.center.y,
        pre.transform.scale
    );
    for (i, p) in pre.path.points.iter().enumerate() {
        if pre.path.missing[i] {
            println!("{i:>2}  missing");
        } else {
            let back = pre.transform.inverse(*p);
            println!("{i:>2}  ({:+.3}, {:+.3})  original ({:.1}, {:.1})", p.x, p.y, back.x, back.y);
        }
    }
    let err = parse_track("time,x,y\n0,0,0\n2,1,0\n5,2,0\n".as_bytes()).and_then(|t| preprocess(&t, false));
    println!("a 3 s gap on a 2 s grid is rejected: {}", err.unwrap_err());
    Ok(())
}
