//! Endpoint catalogue and the role access table. `docs/authz-matrix.md`
//! mirrors [`access`] cell for cell; a test keeps the two in step.

use educhain_core::Role;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Login,
    Logout,
    GetAccount,
    GetProfile,
    PutProfile,
    GetGrades,
    PostGrades,
    PostAttachments,
    ExportTranscript,
    GetOplog,
    GetTx,
    Verify,
    PostAccounts,
    PostStudents,
    PostCourses,
    RunAudit,
    GetAuditReports,
}

impl Endpoint {
    pub const ALL: [Endpoint; 17] = [
        Endpoint::Login,
        Endpoint::Logout,
        Endpoint::GetAccount,
        Endpoint::GetProfile,
        Endpoint::PutProfile,
        Endpoint::GetGrades,
        Endpoint::PostGrades,
        Endpoint::PostAttachments,
        Endpoint::ExportTranscript,
        Endpoint::GetOplog,
        Endpoint::GetTx,
        Endpoint::Verify,
        Endpoint::PostAccounts,
        Endpoint::PostStudents,
        Endpoint::PostCourses,
        Endpoint::RunAudit,
        Endpoint::GetAuditReports,
    ];

    pub fn method(&self) -> &'static str {
        use Endpoint::*;
        match self {
            GetAccount | GetProfile | GetGrades | GetOplog | GetTx | GetAuditReports => "GET",
            PutProfile => "PUT",
            _ => "POST",
        }
    }

    /// Path pattern; `{hash}` is the only parameter.
    pub fn path(&self) -> &'static str {
        use Endpoint::*;
        match self {
            Login => "/login",
            Logout => "/logout",
            GetAccount => "/account",
            GetProfile | PutProfile => "/profile",
            GetGrades | PostGrades => "/grades",
            PostAttachments => "/attachments",
            ExportTranscript => "/transcript/export",
            GetOplog => "/oplog",
            GetTx => "/tx/{hash}",
            Verify => "/verify",
            PostAccounts => "/accounts",
            PostStudents => "/students",
            PostCourses => "/courses",
            RunAudit => "/audit/run",
            GetAuditReports => "/audit/reports",
        }
    }

    /// Matches a request line; returns the endpoint and its path parameter.
    pub fn resolve(method: &str, path: &str) -> Option<(Endpoint, Option<String>)> {
        if let Some(hash) = path.strip_prefix("/tx/") {
            return (method == "GET" && !hash.is_empty() && !hash.contains('/'))
                .then(|| (Endpoint::GetTx, Some(hash.to_owned())));
        }
        Endpoint::ALL
            .iter()
            .find(|e| e.method() == method && e.path() == path)
            .map(|e| (*e, None))
    }

    /// True when some endpoint serves `path` under another method.
    pub fn path_known(path: &str) -> bool {
        path.starts_with("/tx/") || Endpoint::ALL.iter().any(|e| e.path() == path)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Principal {
    Anonymous,
    User(Role),
}

impl Principal {
    pub const ALL: [Principal; 5] = [
        Principal::Anonymous,
        Principal::User(Role::Student),
        Principal::User(Role::Staff),
        Principal::User(Role::Registrar),
        Principal::User(Role::Auditor),
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Principal::Anonymous => "Anonymous",
            Principal::User(r) => r.as_str(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    Allow,
    /// Allowed for records of the caller's own subject id only.
    Own,
    Deny,
}

impl Access {
    pub fn symbol(&self) -> &'static str {
        match self {
            Access::Allow => "allow",
            Access::Own => "own",
            Access::Deny => "deny",
        }
    }
}

pub fn access(endpoint: Endpoint, who: Principal) -> Access {
    use Access::*;
    use Endpoint::*;
    let role = match who {
        Principal::Anonymous => {
            return match endpoint {
                Login | Verify => Allow,
                _ => Deny,
            }
        }
        Principal::User(r) => r,
    };
    match (endpoint, role) {
        (Login | Logout | GetAccount | GetTx | Verify, _) => Allow,
        (GetProfile | GetGrades | GetOplog, Role::Student) => Own,
        (GetProfile | GetGrades | GetOplog, _) => Allow,
        (PutProfile, Role::Student) => Own,
        (PutProfile, Role::Registrar) => Allow,
        (PostGrades | PostAttachments, Role::Staff) => Allow,
        (ExportTranscript, Role::Student) => Own,
        (ExportTranscript, Role::Registrar) => Allow,
        (PostAccounts | PostStudents | PostCourses, Role::Registrar) => Allow,
        (RunAudit | GetAuditReports, Role::Auditor) => Allow,
        _ => Deny,
    }
}
