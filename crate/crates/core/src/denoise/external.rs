use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{check_volume, Denoiser};
use crate::error::{Error, Result};
use crate::io::{read_volume, write_volume};
use crate::linalg::C64;
use crate::model::{Reflectivity, SceneGrid};

/// Delegates to an external program, e.g. a learned denoiser.
///
/// The program is run as `command [args..] <input> <output>` where both paths
/// are `SARVOL1` volume files; it must exit with status 0 and leave a volume
/// of the same grid at `<output>`. Volumes cross the boundary as `f32`.
#[derive(Clone, Debug)]
pub struct ExternalDenoiser {
    command: String,
    args: Vec<String>,
}

static CALLS: AtomicU64 = AtomicU64::new(0);

impl ExternalDenoiser {
    pub fn new(command: &str, args: Vec<String>, deterministic: bool) -> Result<Self> {
        if !deterministic {
            return Err(Error::invalid(
                "external denoisers must declare deterministic = true",
            ));
        }
        if command.is_empty() {
            return Err(Error::invalid("external denoiser command is empty"));
        }
        Ok(ExternalDenoiser {
            command: command.to_string(),
            args,
        })
    }

    fn scratch_dir() -> Result<PathBuf> {
        let id = CALLS.fetch_add(1, Ordering::Relaxed);
        let dir = std::env::temp_dir().join(format!("sarred-ext-{}-{id}", std::process::id()));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }
}

impl Denoiser for ExternalDenoiser {
    fn denoise(&self, grid: &SceneGrid, v: &[C64]) -> Result<Vec<C64>> {
        check_volume(grid, v)?;
        let dir = Self::scratch_dir()?;
        let input = dir.join("input.sarvol");
        let output = dir.join("output.sarvol");
        let result = (|| {
            write_volume(&input, &Reflectivity::new(*grid, v.to_vec())?)?;
            let status = Command::new(&self.command)
                .args(&self.args)
                .arg(&input)
                .arg(&output)
                .status()
                .map_err(|e| Error::Denoiser(format!("cannot run `{}`: {e}", self.command)))?;
            if !status.success() {
                return Err(Error::Denoiser(format!("`{}` exited with {status}", self.command)));
            }
            let out = read_volume(&output)?;
            if out.grid.dims != grid.dims {
                return Err(Error::Denoiser(format!(
                    "`{}` returned dims {:?}, expected {:?}",
                    self.command, out.grid.dims, grid.dims
                )));
            }
            Ok(out.values)
        })();
        let _ = std::fs::remove_dir_all(&dir);
        result
    }

    fn name(&self) -> &'static str {
        "external"
    }
}
