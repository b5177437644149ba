use std::fmt;

#[derive(Debug)]
pub enum AppError {
    /// Bad input; exit code 2.
    Validation(String),
    /// The computation failed; exit code 1.
    Compute(String),
    /// A verification check failed; exit code 3.
    Verification(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Compute(_) => 1,
            AppError::Validation(_) => 2,
            AppError::Verification(_) => 3,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Validation(m) => write!(f, "invalid input: {m}"),
            AppError::Compute(m) => write!(f, "computation failed: {m}"),
            AppError::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<sturmspec::Error> for AppError {
    fn from(e: sturmspec::Error) -> Self {
        AppError::Compute(e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Compute(format!("i/o: {e}"))
    }
}
